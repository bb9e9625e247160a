//! Desk-scale simulator: synthetic corpus, linear toy encoder and the
//! warm-up / mining / curriculum training loop.

pub mod data;
pub mod encoder;
pub mod log;
pub mod train;

pub use data::{gen_synthetic_dataset, DataConfig, SyntheticDataset};
pub use encoder::{CheckpointHeader, Encoded, ToyEncoder};
pub use log::{TrajectoryLog, TrajectoryRecord};
pub use train::{
    fd_gradient_check, pair_loss, pair_loss_and_grad, run_training, toy_encode, train_step, ControllerMode, PairInputs,
    TrainConfig, TrainingOutcome, TrainingSetup,
};
