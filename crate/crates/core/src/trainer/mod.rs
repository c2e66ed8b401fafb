//! Joint objective, training loop and checkpoints.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use loss::{
    dialogue_loss, loss_in_text, loss_out_of_text, loss_topic, LossOptions, LossTerms, TopicLossKind,
};
pub use train::{
    topic_labels, train, EpochControl, EpochRecord, LossSummary, TrainConfig, TrainData, TrainOutcome,
};
