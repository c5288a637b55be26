//! Dense numerical stack: tensors, layers with explicit backward passes,
//! cross-entropy, optimizers and the checkpoint format.

mod checkpoint;
pub mod gradcheck;
mod init;
mod layers;
mod loss;
mod optim;
mod real;
mod sequential;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{
    sigmoid, BatchNorm2d, Conv2d, FullyConnected, Layer, LayerSpec, MaxPool2d, Mode, Saved,
};
pub use loss::{cross_entropy, softmax};
pub use optim::{Adam, Optimizer, OptimizerConfig, Sgd};
pub use real::{gemm, Real};
pub use sequential::Sequential;
pub use tensor::Tensor;
