//! Dialogues, pronoun instances and the external object pool.

mod dialogue;
mod pool;

pub use dialogue::{
    classify_pronoun, load_dialogues, load_dialogues_with_report, normalize_id, parse_dialogues,
    write_dialogues, Dialogue, LoadedDialogues, MentionSpan, PronounClass, PronounInstance,
};
pub use pool::{
    frequency_split, load_object_pool, train_frequencies, write_object_pool, FrequencyBucket,
    CategorySpec, ObjectCategory, ObjectPool, PoolLoadReport, PoolSpec, DEFAULT_FREQUENCY_THRESHOLD,
};

