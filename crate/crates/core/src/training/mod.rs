//! Optimizers, learning-rate schedules and the two neural training loops.

pub mod optim;
pub mod schedule;

pub use optim::{Algorithm, OptimizerState};
pub use schedule::{DecayRule, LrSchedule};
mod loops;

pub use loops::{
    evaluate, finetune_batch_loss, predict, run_finetune, run_ssl, ssl_batch_loss, EpochLog, FineTuneHead,
    FineTuneSetup, SslContext, TrainConfig, TrainError,
};
