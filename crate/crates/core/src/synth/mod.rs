//! Articulated-body echo synthesis: parametric scatterer trajectories for
//! nine motion classes, dechirped FMCW frames and labeled datasets.

mod dataset;
mod frame;
mod motion;

pub use dataset::{synth_dataset, synth_maps_with, FrameJob, OutputKind, SynthSpec};
pub use frame::synth_frame;
pub use motion::{
    BodyScatterer, MotionClass, MotionModel, Path, ScattererState, DEFAULT_RADAR_HEIGHT, REFERENCE_DISTANCE,
    REFERENCE_HEIGHT,
};
