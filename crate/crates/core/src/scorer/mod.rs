//! Span representations, scoring heads and their parameters.

mod model;
mod params;
mod store;

pub use model::{
    combine_scores, feed_forward, forward_dialogue, global_score, local_score, score_dialogue,
    span_representation, DialogueScores,
    token_context, topic_embedding, topic_logits, DialogueForward, ForwardRequest, ObjectBank,
    ObjectScoring, PronounForward, TokenContext,
};
pub use params::{
    width_bucket, BoundParams, ParamId, ScorerConfig, ScorerParams, N_PARAMS, PARAM_NAMES,
    WIDTH_BUCKETS,
};
pub use store::{
    decode_embedding, encode_embedding, read_embedding_file, write_embedding_file,
    DialogueEmbeddings, DialogueEntry, EmbeddingStore, Manifest, ObjectEntry, MANIFEST_FILE,
};
