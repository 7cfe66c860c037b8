//! Small CPU neural network engine for sequence regression: layer
//! primitives with hand-written gradients, model builders, a training loop
//! and weight persistence.

pub mod error;
pub mod layers;
pub mod model;
pub mod param;
pub mod store;
pub mod train;

pub use error::{NnError, Result};
pub use model::{build_model, receptive_field, Architecture, Model, ModelKind, ModelSpec};
pub use param::Param;
pub use store::{load_model, load_weights, save_weights, WeightStore};
pub use train::{predict, train, TrainConfig, TrainReport};
