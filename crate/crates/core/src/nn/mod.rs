//! Neural network building blocks: layer primitives, losses, Adam, and the
//! two model architectures used by the simulator (the convolutional
//! classifier that circulates between nodes and the DQN selector head).

pub mod adam;
pub mod layers;
pub mod loss;
mod model;

pub use adam::AdamState;
pub use model::{
    DqnCache, DqnModelSpec, Evaluation, FoundationCache, FoundationModelSpec, ModelWeights,
    TrainOptions, WeightLayout,
};
