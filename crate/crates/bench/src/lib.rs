//! Fixtures shared by the criterion benches under `benches/`.

use exophora::scorer::{EmbeddingStore, ScorerConfig};
use exophora::synthetic::{Scenario, Split, SyntheticConfig, World};

pub struct Fixture {
    pub world: World,
    pub split: Split,
    pub store: EmbeddingStore,
    pub labels: Vec<Vec<f64>>,
}

/// Synthetic corpus with `dim`-wide embeddings and a pool of `n_objects`.
pub fn fixture(n_dialogues: usize, dim: usize, n_objects: usize) -> Fixture {
    let mut cfg = SyntheticConfig::new(Scenario::Overfit);
    cfg.dim = dim;
    cfg.n_objects = n_objects;
    let world = World::new(cfg).expect("synthetic world");
    let split = world.sample(n_dialogues, 1, "bench");
    let store = world.store(&[&split]).expect("synthetic store");
    let n = world.config.n_topics;
    let labels = split
        .topics
        .iter()
        .map(|&k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    Fixture {
        world,
        split,
        store,
        labels,
    }
}

/// Default head sizes except for the embedding width.
pub fn scorer(dim: usize, n_topics: usize) -> ScorerConfig {
    ScorerConfig::new(dim, n_topics)
}
