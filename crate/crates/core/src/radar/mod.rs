//! Range-Doppler processing: fast-time FFT, slow-time FFT with a centred
//! zero-Doppler column, magnitude, and min/max normalization.

pub mod colormap;
mod config;
mod fft;
pub mod io;
mod rdmap;

pub use config::{ChirpConfig, Window, SPEED_OF_LIGHT};
pub use fft::{doppler_fft, range_fft, ComplexMatrix, RawFrame};
pub use rdmap::{
    doppler_spread, frame_to_rdmap, magnitude_range_major, normalize, rd_magnitude, resize, resize_for_network,
    MapMeta, RangeDopplerMap, RealMatrix,
};
