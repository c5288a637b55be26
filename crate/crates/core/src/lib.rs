//! Few-shot human motion recognition from FMCW radar range-Doppler maps.
//!
//! The crate covers the full chain:
//!
//! * [`radar`]: raw dechirped frames to normalized range-Doppler maps, plus
//!   the on-disk map and dataset formats.
//! * [`synth`]: articulated point-scatterer motion models that generate
//!   labeled frames at a chosen viewing aspect.
//! * [`nn`]: a small tensor/layer stack with hand-written backward passes.
//! * [`fewshot`]: the Conv64F embedding, squeeze-and-excitation channel
//!   attention and the image-to-class k-NN cosine metric.
//! * [`episode`]: N-way K-shot episode sampling, episodic training and
//!   evaluation.

pub mod episode;
pub mod error;
pub mod fewshot;
pub mod nn;
pub mod radar;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
