//! Few-shot classifier: Conv64F embedding, squeeze-and-excitation channel
//! attention, the image-to-class k-NN cosine metric over local descriptors,
//! and a prototype-mean baseline.

mod config;
mod embedding;
mod feature;
mod metric;
mod model;
mod proto;
mod se;

pub use config::{CropSpec, InputSpec, MetricKind, ModelConfig};
pub use embedding::conv64f;
pub use feature::EmbeddedFeature;
pub use metric::{
    argmax, class_score, class_score_with, classify, cosine_sim, ClassScore, ClassSupportPool, Classification,
    KnnGrad, QueryDescriptors,
};
pub use model::{ChannelDn4, EpisodeOutcome, EpisodeTensors};
pub use proto::{global_average, prototype, prototype_classify, prototype_scores};
pub use se::{recalibrate, squeeze, SeBlock, SeTape};
