//! REDD: feed-forward classifier over reduced page embeddings.
//!
//! The nonlinear variant has three SELU hidden layers followed by a single
//! sigmoid unit; the linear variant is the sigmoid unit alone.

mod gradcheck;
mod model;
mod train;

pub use gradcheck::{gradient_check, GradCheckReport, FD_STEP};
pub use model::{
    embedding_matrix, predict_pages, selu, selu_derivative, sigmoid, Architecture, Dense,
    ReddModel, TrainingMeta, SELU_ALPHA, SELU_LAMBDA,
};
pub use train::{
    bce_loss, gradients, train, train_detailed, EarlyStop, Gradients, OptimizerKind, TrainConfig,
    TrainOutcome, BCE_EPSILON,
};
