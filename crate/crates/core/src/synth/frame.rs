use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::motion::MotionModel;
use crate::error::{Error, Result};
use crate::radar::{ChirpConfig, RawFrame};

/// Dechirped baseband samples of one frame starting at time `t0`.
///
/// Every scatterer contributes `a exp(j(2π f_b t + 4π R / λ))` with the beat
/// frequency `f_b` and range `R` re-evaluated once per chirp, so the
/// carrier phase advances by the integral of the Doppler shift.
///
/// `snr_db` is measured on the range profile of one chirp: a unit-amplitude
/// echo peaks `snr_db` above the mean noise power of the range FFT. The
/// complex white noise per sample therefore has variance
/// `samples * 10^(-snr_db/10)`. `None` synthesizes a noiseless frame.
pub fn synth_frame(
    model: &MotionModel,
    config: &ChirpConfig,
    t0: f64,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<RawFrame> {
    config.validate()?;
    model.validate()?;
    let mut frame = RawFrame::zeros(config);
    let lambda = config.wavelength();
    let step_phase = TAU / config.sample_rate;
    for n in 0..config.chirps_per_frame {
        let t = t0 + n as f64 * config.chirp_duration;
        let row = frame.samples.row_mut(n);
        for s in model.states_at(t)? {
            if s.amplitude == 0.0 {
                continue;
            }
            let carrier = (4.0 * PI * s.range / lambda).rem_euclid(TAU);
            let mut z = Complex64::from_polar(s.amplitude, carrier);
            let step = Complex64::from_polar(1.0, step_phase * config.beat_frequency(s.range));
            for v in row.iter_mut() {
                *v += z;
                z *= step;
            }
        }
    }
    if let Some(snr) = snr_db {
        if !snr.is_finite() {
            return Err(Error::Config(format!("snr_db must be finite, got {snr}")));
        }
        let samples = config.samples_per_chirp as f64;
        let sigma = (samples * 10f64.powf(-snr / 10.0) / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in frame.samples.data.iter_mut() {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(frame)
}
