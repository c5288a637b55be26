//! Central finite-difference gradient oracle.

/// Outcome of comparing one analytic derivative with its numeric estimate.
#[derive(Clone, Copy, Debug)]
pub struct GradSample {
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// `|a - n| / max(|a|, |n|, floor)`; the floor keeps derivatives that are
    /// zero in exact arithmetic from producing 0/0.
    pub fn rel_error(&self, floor: f64) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(floor);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Central difference `(f(x + eps) - f(x - eps)) / 2eps` of a scalar
/// function of one coordinate, restoring the coordinate afterwards.
pub fn central_difference(x: &mut f64, eps: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let orig = *x;
    let plus = f(orig + eps);
    let minus = f(orig - eps);
    *x = orig;
    (plus - minus) / (2.0 * eps)
}

/// Largest relative error over a set of samples.
pub fn max_rel_error(samples: &[GradSample], floor: f64) -> f64 {
    samples.iter().map(|s| s.rel_error(floor)).fold(0.0, f64::max)
}
