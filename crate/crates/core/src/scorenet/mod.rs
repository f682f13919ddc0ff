//! Score network, hand-written autodiff, implicit score matching and
//! training.

mod checkpoint;
mod loss;
mod mlp;
mod tape;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader};
pub use loss::{
    divergence, input_matrix, ism_loss, rescaled_scores, DivergenceMode, LossContext, LossValue, Weighting,
    EXACT_DIVERGENCE_WARN_DIM,
};
pub use mlp::{AffineScore, MlpParams, ScoreModel, DEPTH};
pub use tape::{Gradients, Tape, Var};
pub use train::{train, train_from, write_loss_csv, Adam, LossRecord, RescaledScore, TrainConfig, TrainOutput};
