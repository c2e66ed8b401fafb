//! Unsupervised topic labels for dialogues (collapsed-Gibbs LDA).

mod lda;
mod stopwords;

pub use lda::{
    default_stopwords, fit_lda, lda_preprocess, LdaConfig, LdaSampler, TopicDistribution,
    TopicModel, Vocabulary,
};
pub use stopwords::ENGLISH_STOPWORDS;
