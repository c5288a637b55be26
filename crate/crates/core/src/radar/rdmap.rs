use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};
use crate::radar::fft::{doppler_fft, range_fft, ComplexMatrix, RawFrame};

/// Row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RealMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("real matrix", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(row, col)` of the largest entry; the first one in row-major order on
    /// ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }
}

/// Labels and acquisition geometry attached to a map. Serialized as the
/// JSON sidecar of each `.rdm` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    #[serde(rename = "class")]
    pub class_label: String,
    pub aspect_deg: f64,
    pub subject_id: u32,
    pub distance_m: f64,
    pub frame_index: u64,
}

/// Normalized range-Doppler magnitude: rows are range bins, columns are
/// Doppler bins with zero velocity at column `cols / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeDopplerMap {
    pub values: RealMatrix,
    pub meta: MapMeta,
}

/// `(X - min X) / max X`, elementwise.
///
/// The divisor is the maximum itself rather than the range, so a map whose
/// minimum is positive tops out below one.
pub fn normalize(x: &RealMatrix) -> Result<RealMatrix> {
    if x.data.is_empty() {
        return Err(Error::DegenerateInput("empty matrix".into()));
    }
    let (min, max) = (x.min(), x.max());
    if !(max > 0.0) || !max.is_finite() || !min.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "cannot normalize a matrix with max {max} (all-zero or non-positive magnitude)"
        )));
    }
    let data = x.data.iter().map(|&v| (v - min) / max).collect();
    RealMatrix::from_vec(x.rows, x.cols, data)
}

/// Magnitude of a `[doppler, range]` spectrum, transposed to
/// `[range, doppler]`.
pub fn magnitude_range_major(spectrum: &ComplexMatrix) -> RealMatrix {
    let (d, r) = (spectrum.rows, spectrum.cols);
    let mut data = vec![0.0; d * r];
    for di in 0..d {
        for ri in 0..r {
            data[ri * d + di] = spectrum.get(di, ri).norm();
        }
    }
    RealMatrix { rows: r, cols: d, data }
}

/// Un-normalized range-Doppler magnitude of a frame.
pub fn rd_magnitude(frame: &RawFrame) -> Result<RealMatrix> {
    let range = range_fft(frame)?;
    let rd = doppler_fft(&range, frame.config.window)?;
    Ok(magnitude_range_major(&rd))
}

pub fn frame_to_rdmap(frame: &RawFrame, meta: MapMeta) -> Result<RangeDopplerMap> {
    let values = normalize(&rd_magnitude(frame)?)?;
    Ok(RangeDopplerMap { values, meta })
}

/// Standard deviation, in bins, of the Doppler marginal of a range-major
/// map. Zero when the map is empty.
pub fn doppler_spread(values: &RealMatrix) -> f64 {
    let mut marginal = vec![0.0; values.cols];
    for r in 0..values.rows {
        for (m, v) in marginal.iter_mut().zip(&values.data[r * values.cols..(r + 1) * values.cols]) {
            *m += v;
        }
    }
    let total: f64 = marginal.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mean = marginal.iter().enumerate().map(|(d, m)| d as f64 * m).sum::<f64>() / total;
    let var = marginal.iter().enumerate().map(|(d, m)| (d as f64 - mean).powi(2) * m).sum::<f64>() / total;
    var.sqrt()
}

/// Separable triangle-filter weights mapping `n_in` samples onto `n_out`.
///
/// When shrinking, the triangle support widens with the scale factor so
/// every input sample contributes (area-aware bilinear); when enlarging it is
/// plain bilinear interpolation. Returns `(first index, weights)` per output.
fn triangle_weights(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = n_in as f64 / n_out as f64;
    let support = scale.max(1.0);
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(n_in);
            let mut w: Vec<f64> = (lo..hi)
                .map(|j| (1.0 - ((j as f64 + 0.5 - center) / support).abs()).max(0.0))
                .collect();
            let sum: f64 = w.iter().sum();
            if sum > 0.0 {
                w.iter_mut().for_each(|v| *v /= sum);
            }
            (lo, w)
        })
        .collect()
}

/// Resamples a matrix to `target_h x target_w`.
pub fn resize(values: &RealMatrix, target_h: usize, target_w: usize) -> Result<RealMatrix> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Config(format!("resize target must be positive, got {target_h}x{target_w}")));
    }
    if values.rows == target_h && values.cols == target_w {
        return Ok(values.clone());
    }
    let wr = triangle_weights(values.rows, target_h);
    let wc = triangle_weights(values.cols, target_w);
    // columns first, then rows
    let mut tmp = vec![0.0; values.rows * target_w];
    for r in 0..values.rows {
        let src = &values.data[r * values.cols..(r + 1) * values.cols];
        for (c, (lo, w)) in wc.iter().enumerate() {
            tmp[r * target_w + c] = w.iter().enumerate().map(|(k, &wk)| wk * src[lo + k]).sum();
        }
    }
    let mut out = vec![0.0; target_h * target_w];
    for (r, (lo, w)) in wr.iter().enumerate() {
        for c in 0..target_w {
            out[r * target_w + c] = w
                .iter()
                .enumerate()
                .map(|(k, &wk)| wk * tmp[(lo + k) * target_w + c])
                .sum();
        }
    }
    RealMatrix::from_vec(target_h, target_w, out)
}

/// Network input `[channels, target_h, target_w]`: the resized map
/// replicated across channels and clamped to `[0, 1]`.
pub fn resize_for_network<T: Real>(
    map: &RangeDopplerMap,
    target_h: usize,
    target_w: usize,
    channels: usize,
) -> Result<Tensor<T>> {
    if channels == 0 {
        return Err(Error::Config("channel count must be positive".into()));
    }
    let plane = resize(&map.values, target_h, target_w)?;
    let mut data = Vec::with_capacity(channels * plane.data.len());
    for _ in 0..channels {
        data.extend(plane.data.iter().map(|&v| T::lit(v.clamp(0.0, 1.0))));
    }
    Tensor::from_vec(&[channels, target_h, target_w], data)
}
