//! Episodic few-shot harness: labeled datasets and aspect splits, N-way
//! K-shot task sampling, meta-training and accuracy evaluation.

mod data;
mod eval;
mod report;
mod sampler;
mod train;

pub use data::{LabeledSet, Sample, SplitSpec, SplitView};
pub use eval::{embed_view, evaluate, mean_ci95, scenario_sweep, RunMetrics, ScenarioFilter, ScenarioRow};
pub use report::{confusion_csv, results_csv, scenario_csv};
pub use sampler::{sample_episode, EpisodeTask, Protocol};
pub use train::{
    checkpoint_dir, resume_from, train, TrainConfig, TrainState, BEST_CHECKPOINT, DIVERGENCE_FILE, LAST_CHECKPOINT,
    STATE_FILE,
};
