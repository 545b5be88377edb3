//! Loss, Adam optimizer, training loop, evaluation, grouped k-fold splits
//! and checkpoint serialization.

mod adam;
mod checkpoint;
mod kfold;
mod loss;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use kfold::{kfold, Fold, FoldSpec, Summary};
pub use loss::{argmax_rows, softmax, softmax_cross_entropy};
pub use trainer::{
    evaluate, metrics_csv, predict, predict_proba, score, BestModel, Control, Evaluation, Metrics,
    TrainConfig, TrainOutcome, Trainer,
};
