#![allow(dead_code)]

use std::collections::BTreeSet;

use exophora::scorer::{EmbeddingStore, ScorerConfig};
use exophora::synthetic::{Scenario, Split, SyntheticConfig, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scorer small enough for exhaustive finite differences.
pub fn tiny_scorer(d_emb: usize, n_topics: usize) -> ScorerConfig {
    ScorerConfig {
        d_emb,
        d_width: 3,
        d_tp: 4,
        hidden: 5,
        topic_hidden: 6,
        n_topics,
        use_global: true,
    }
}

pub struct Toy {
    pub world: World,
    pub split: Split,
    pub store: EmbeddingStore,
    /// One-hot label of each dialogue's latent topic.
    pub labels: Vec<Vec<f64>>,
}

pub fn one_hot(split: &Split, n: usize) -> Vec<Vec<f64>> {
    split
        .topics
        .iter()
        .map(|&k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// A few overfit-style dialogues over a small pool with narrow embeddings.
pub fn toy(n_dialogues: usize, seed: u64) -> Toy {
    let mut cfg = SyntheticConfig::new(Scenario::Overfit);
    cfg.dim = 6;
    cfg.n_objects = 6;
    cfg.n_topics = 3;
    cfg.gap = 1;
    cfg.pronouns_per_dialogue = 3;
    cfg.seed = seed;
    let world = World::new(cfg).unwrap();
    let split = world.sample(n_dialogues, seed, "toy");
    let store = world.store(&[&split]).unwrap();
    let labels = one_hot(&split, 3);
    Toy {
        world,
        split,
        store,
        labels,
    }
}

// ---- direct-summation loss oracles ---------------------------------------

/// `−ln(Σ_gold e^s / Σ_all e^s)` by plain exponentiation.
pub fn naive_in_text(scores: &[f64], gold: &[usize]) -> f64 {
    let num: f64 = gold.iter().map(|&g| scores[g].exp()).sum();
    let den: f64 = scores.iter().map(|s| s.exp()).sum();
    -(num / den).ln()
}

pub fn naive_out_of_text(scores: &[f64], gold: usize, mask: &BTreeSet<usize>) -> f64 {
    let mut den = 0.0;
    for (i, s) in scores.iter().enumerate() {
        if !mask.contains(&i) {
            den += s.exp();
        }
    }
    -(scores[gold].exp() / den).ln()
}

pub fn naive_topic_l2(logits: &[f64], target: &[f64]) -> f64 {
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let mut total = 0.0;
    for (l, t) in logits.iter().zip(target) {
        let d = l.exp() / z - t;
        total += d * d;
    }
    0.5 * total
}

pub fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

// ---- topic recovery -------------------------------------------------------

/// Documents drawn from `n_topics` generators with disjoint `words_per_topic`
/// vocabularies; each document uses a single generator. Returns the documents,
/// each document's generator and every generator's word distribution.
pub fn disjoint_corpus(
    n_topics: usize,
    words_per_topic: usize,
    docs_per_topic: usize,
    doc_len: usize,
    seed: u64,
) -> (Vec<Vec<usize>>, Vec<usize>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = n_topics * words_per_topic;
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for t in 0..n_topics {
        for _ in 0..docs_per_topic {
            docs.push(
                (0..doc_len)
                    .map(|_| t * words_per_topic + rng.gen_range(0..words_per_topic))
                    .collect(),
            );
            labels.push(t);
        }
    }
    let gens = (0..n_topics)
        .map(|t| {
            (0..v)
                .map(|w| {
                    if w / words_per_topic == t {
                        1.0 / words_per_topic as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    (docs, labels, gens)
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Greedy one-to-one matching of generators to learned topics by smallest
/// total-variation distance. Returns `(generator → learned, distances)`.
pub fn greedy_align(gens: &[Vec<f64>], learned: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (g, gd) in gens.iter().enumerate() {
        for (l, ld) in learned.iter().enumerate() {
            pairs.push((tv(gd, ld), g, l));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut map = vec![usize::MAX; gens.len()];
    let mut dist = vec![0.0; gens.len()];
    let mut used = vec![false; learned.len()];
    for (d, g, l) in pairs {
        if map[g] == usize::MAX && !used[l] {
            map[g] = l;
            dist[g] = d;
            used[l] = true;
        }
    }
    (map, dist)
}
