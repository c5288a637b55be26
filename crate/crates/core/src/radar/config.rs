use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Window applied before each FFT.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

/// Linear FMCW chirp and sampling parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChirpConfig {
    /// Swept bandwidth, Hz.
    pub bandwidth: f64,
    /// Start frequency of the sweep, Hz.
    pub carrier_start: f64,
    /// Chirp duration (also the chirp repetition interval), s.
    pub chirp_duration: f64,
    /// Complex (IQ) ADC sample rate, Hz.
    pub sample_rate: f64,
    pub samples_per_chirp: usize,
    pub chirps_per_frame: usize,
    pub window: Window,
}

impl Default for ChirpConfig {
    /// 78-80 GHz sweep, 256 samples at 2.5 MHz per 102.4 µs chirp, 256
    /// chirps per frame.
    fn default() -> Self {
        Self {
            bandwidth: 2.0e9,
            carrier_start: 78.0e9,
            chirp_duration: 102.4e-6,
            sample_rate: 2.5e6,
            samples_per_chirp: 256,
            chirps_per_frame: 256,
            window: Window::Rectangular,
        }
    }
}

impl ChirpConfig {
    /// Frequency slope μ = bandwidth / chirp duration, Hz/s.
    pub fn slope(&self) -> f64 {
        self.bandwidth / self.chirp_duration
    }

    /// Mid-sweep frequency used for Doppler, Hz.
    pub fn center_frequency(&self) -> f64 {
        self.carrier_start + 0.5 * self.bandwidth
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency()
    }

    pub fn frame_duration(&self) -> f64 {
        self.chirp_duration * self.chirps_per_frame as f64
    }

    /// Beat frequency 2μR/c of a scatterer at range `r` metres.
    pub fn beat_frequency(&self, r: f64) -> f64 {
        2.0 * self.slope() * r / SPEED_OF_LIGHT
    }

    /// Doppler shift 2·v·f_c/c for radial velocity `v` m/s.
    pub fn doppler_frequency(&self, v: f64) -> f64 {
        2.0 * v * self.center_frequency() / SPEED_OF_LIGHT
    }

    /// Range-FFT bin (possibly fractional) of a scatterer at `r` metres.
    pub fn range_bin(&self, r: f64) -> f64 {
        self.beat_frequency(r) * self.samples_per_chirp as f64 / self.sample_rate
    }

    /// Doppler-bin offset from the centre column for radial velocity `v`.
    pub fn doppler_bin_offset(&self, v: f64) -> f64 {
        self.doppler_frequency(v) * self.chirps_per_frame as f64 * self.chirp_duration
    }

    /// Index of the zero-Doppler column after the FFT shift.
    pub fn zero_doppler_bin(&self) -> usize {
        self.chirps_per_frame / 2
    }

    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    pub fn max_range(&self) -> f64 {
        self.range_resolution() * self.sample_rate * self.chirp_duration
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("carrier_start", self.carrier_start),
            ("chirp_duration", self.chirp_duration),
            ("sample_rate", self.sample_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.samples_per_chirp == 0 || self.chirps_per_frame == 0 {
            return Err(Error::Config("samples_per_chirp and chirps_per_frame must be positive".into()));
        }
        let implied = self.sample_rate * self.chirp_duration;
        if (implied - self.samples_per_chirp as f64).abs() > 1.0 + 1e-9 {
            return Err(Error::Config(format!(
                "samples_per_chirp {} inconsistent with sample_rate x chirp_duration = {implied:.3}",
                self.samples_per_chirp
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_self_consistent() {
        let c = ChirpConfig::default();
        c.validate().unwrap();
        assert!((c.slope() / (2.0e9 / 102.4e-6) - 1.0).abs() < 1e-9);
        assert!((c.sample_rate * c.chirp_duration - 256.0).abs() < 1e-6);
    }

    #[test]
    fn millisecond_chirp_is_rejected() {
        let c = ChirpConfig {
            chirp_duration: 102.4e-3,
            ..ChirpConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn doppler_of_one_metre_per_second() {
        let c = ChirpConfig::default();
        let fd = c.doppler_frequency(1.0);
        assert!((fd - 527.0).abs() < 1.0, "{fd}");
    }
}
