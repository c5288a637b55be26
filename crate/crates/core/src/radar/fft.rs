use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::radar::{ChirpConfig, Window};

/// Row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("complex matrix", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Complex64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }
}

/// One frame of dechirped samples: `chirps_per_frame` rows (slow time) by
/// `samples_per_chirp` columns (fast time).
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    pub samples: ComplexMatrix,
    pub config: ChirpConfig,
}

impl RawFrame {
    pub fn new(samples: ComplexMatrix, config: ChirpConfig) -> Result<Self> {
        let frame = Self { samples, config };
        frame.check_dims()?;
        Ok(frame)
    }

    pub fn zeros(config: &ChirpConfig) -> Self {
        Self {
            samples: ComplexMatrix::zeros(config.chirps_per_frame, config.samples_per_chirp),
            config: config.clone(),
        }
    }

    pub fn check_dims(&self) -> Result<()> {
        let (r, c) = (self.config.chirps_per_frame, self.config.samples_per_chirp);
        if self.samples.rows != r || self.samples.cols != c || self.samples.data.len() != r * c {
            return Err(Error::dim(
                "raw frame",
                format!("{r}x{c} (chirps x samples)"),
                format!("{}x{}", self.samples.rows, self.samples.cols),
            ));
        }
        Ok(())
    }
}

fn window_coefficients(window: Window, n: usize) -> Option<Vec<f64>> {
    match window {
        Window::Rectangular => None,
        Window::Hann => Some(
            (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        ),
    }
}

/// Forward FFT along fast time, independently for every chirp. Output keeps
/// the `[chirp, range bin]` layout of the input.
pub fn range_fft(frame: &RawFrame) -> Result<ComplexMatrix> {
    frame.check_dims()?;
    let mut out = frame.samples.clone();
    let n = out.cols;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let win = window_coefficients(frame.config.window, n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for r in 0..out.rows {
        let row = out.row_mut(r);
        if let Some(w) = &win {
            row.iter_mut().zip(w).for_each(|(v, &c)| *v *= c);
        }
        fft.process_with_scratch(row, &mut scratch);
    }
    Ok(out)
}

/// Forward FFT along slow time for every range bin, followed by a shift that
/// moves zero Doppler to row `chirps / 2`. Output keeps the
/// `[doppler bin, range bin]` layout.
pub fn doppler_fft(range_profile: &ComplexMatrix, window: Window) -> Result<ComplexMatrix> {
    let (rows, cols) = (range_profile.rows, range_profile.cols);
    if rows == 0 || cols == 0 || range_profile.data.len() != rows * cols {
        return Err(Error::dim("range profile", format!("{rows}x{cols}"), range_profile.data.len()));
    }
    let fft = FftPlanner::new().plan_fft_forward(rows);
    let win = window_coefficients(window, rows);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    let mut out = ComplexMatrix::zeros(rows, cols);
    let half = rows / 2;
    for c in 0..cols {
        for (r, v) in column.iter_mut().enumerate() {
            *v = range_profile.get(r, c) * win.as_ref().map_or(1.0, |w| w[r]);
        }
        fft.process_with_scratch(&mut column, &mut scratch);
        for (k, &v) in column.iter().enumerate() {
            out.data[((k + half) % rows) * cols + c] = v;
        }
    }
    Ok(out)
}
