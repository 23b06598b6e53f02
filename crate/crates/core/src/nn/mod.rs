//! Fixed-architecture networks: specs, evaluation, backprop, Adam, persistence.

mod adam;
mod checkpoint;
mod gemm;
mod kernels;
mod network;
mod spec;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, TrainMeta};
pub use network::{
    cross_entropy, softmax, softmax_rows, ActivationTrace, DropoutMode, Gradients, Inference,
    Network,
};
pub use spec::{bias_name, build_architecture, weight_name, LayerSpec, ModelKind, NetworkSpec};
pub use train::{accuracy, continue_training, train_classifier, EpochStats, TrainHyper};
