//! A small f64 neural-network engine: dense, batch-norm and ReLU layers with
//! hand-written backward passes, softmax cross-entropy, SGD-momentum and
//! AdamW, mixup, and a checkpoint format.

pub mod checkpoint;
pub mod loss;
pub mod mixup;
pub mod mlp;
pub mod optim;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{argmax, log_softmax, softmax, softmax_cross_entropy, weighted_cross_entropy};
pub use mixup::{mix_with, mixup};
pub use mlp::{ClassifierConfig, Gradients, Layer, LayerSpec, Mlp, Mode};
pub use optim::{Optimizer, OptimizerKind, SgdSchedule};
