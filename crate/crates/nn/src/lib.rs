//! A small CPU neural-network stack for 28×28 image classification with a
//! TensorProjection layer: conv2d, average pooling, projection, flatten,
//! dense, dropout and ReLU layers, softmax cross-entropy, RMSProp, IDX
//! loading, metrics CSVs and checkpoints.
//!
//! All computation is single-threaded and deterministic for a given seed.

pub mod activations;
pub mod check;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;

pub use activations::Activations;
pub use error::{NnError, Result};
pub use layers::{Activation, Layer, Padding, RunMode};
pub use model::{count_params, model1_tp, model2_avgpool, parse_model_spec, LayerSpec, ModelSpec, Network};
pub use optim::RmsProp;
