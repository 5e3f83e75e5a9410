//! Losses, Adam/Adamax, and the mini-batch training loop.

mod fit;
mod loss;
mod optim;

pub use fit::{
    evaluate, fit, prepare_input, EarlyStopping, EpochRecord, Evaluation, Prediction, Preprocessing, TrainConfig,
    TrainHistory,
};
pub use loss::{binary_cross_entropy, categorical_cross_entropy, LossKind, PROB_FLOOR};
pub use optim::{adam_step, OptimizerKind, OptimizerState};
