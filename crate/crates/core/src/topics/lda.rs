use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stopwords::ENGLISH_STOPWORDS;
use crate::binfmt::Container;
use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::seed::label_hash;

const FORMAT: &str = "topic_model";

/// Word list fixed on the training split, with stopwords and rare words removed.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary { words, index }
    }

    /// Words occurring at least `min_freq` times in `train` (after case folding),
    /// excluding `stopwords`, in lexicographic order.
    pub fn build(train: &[Dialogue], min_freq: usize, stopwords: &HashSet<String>) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for d in train {
            for t in &d.tokens {
                if let Some(w) = fold(t, stopwords) {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        let mut words: Vec<String> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq)
            .map(|(w, _)| w)
            .collect();
        words.sort();
        Self::from_words(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

pub fn default_stopwords() -> HashSet<String> {
    ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

fn fold(token: &str, stopwords: &HashSet<String>) -> Option<String> {
    let w = token.to_lowercase();
    if !w.chars().any(char::is_alphabetic) || stopwords.contains(&w) {
        return None;
    }
    Some(w)
}

/// Bag of vocabulary ids for one dialogue; out-of-vocabulary words are dropped.
pub fn lda_preprocess(d: &Dialogue, vocab: &Vocabulary, stopwords: &HashSet<String>) -> Vec<usize> {
    d.tokens
        .iter()
        .filter_map(|t| fold(t, stopwords))
        .filter_map(|w| vocab.id(&w))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub n_topics: usize,
    /// Document-topic prior; `None` means `50 / n_topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub fold_iters: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            n_topics: 40,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            fold_iters: 100,
            seed: 13,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.n_topics as f64)
    }
}

/// Distribution over topics; non-negative and summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicDistribution {
    pub probs: Vec<f64>,
}

impl TopicDistribution {
    pub fn uniform(n: usize) -> Self {
        TopicDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// Topic indices by descending probability, ties by index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx
    }
}

/// Fitted collapsed-Gibbs LDA model.
#[derive(Clone, Debug)]
pub struct TopicModel {
    pub n_topics: usize,
    pub vocab: Vocabulary,
    /// `n_topics × |vocab|`, row-major.
    pub word_topic_counts: Vec<u32>,
    pub topic_totals: Vec<u64>,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
    pub fold_iters: usize,
    /// Frozen `p(word | topic)`, word-major, for fold-in.
    phi: Vec<f64>,
}

impl PartialEq for TopicModel {
    fn eq(&self, other: &Self) -> bool {
        self.n_topics == other.n_topics
            && self.vocab == other.vocab
            && self.word_topic_counts == other.word_topic_counts
            && self.topic_totals == other.topic_totals
            && self.alpha.to_bits() == other.alpha.to_bits()
            && self.beta.to_bits() == other.beta.to_bits()
            && self.seed == other.seed
            && self.iterations == other.iterations
            && self.fold_iters == other.fold_iters
    }
}

/// Collapsed Gibbs sampler state over a fixed corpus.
pub struct LdaSampler<'a> {
    docs: &'a [Vec<usize>],
    n_topics: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    assignments: Vec<Vec<u32>>,
    doc_topic: Vec<Vec<u32>>,
    word_topic: Vec<u32>,
    topic_totals: Vec<u64>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl<'a> LdaSampler<'a> {
    pub fn new(docs: &'a [Vec<usize>], vocab_size: usize, config: &LdaConfig) -> Result<Self> {
        if config.n_topics < 2 {
            return Err(Error::Config(format!(
                "topic count must be at least 2, got {}",
                config.n_topics
            )));
        }
        if vocab_size == 0 {
            return Err(Error::Config("topic model vocabulary is empty".into()));
        }
        if docs.is_empty() {
            return Err(Error::Config("topic model corpus is empty".into()));
        }
        if let Some(&w) = docs.iter().flatten().find(|&&w| w >= vocab_size) {
            return Err(Error::Validation(format!(
                "word id {w} outside vocabulary of {vocab_size}"
            )));
        }
        let k = config.n_topics;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut word_topic = vec![0u32; k * vocab_size];
        let mut topic_totals = vec![0u64; k];
        let mut doc_topic = Vec::with_capacity(docs.len());
        let mut assignments = Vec::with_capacity(docs.len());
        for doc in docs {
            let mut dt = vec![0u32; k];
            let z: Vec<u32> = doc
                .iter()
                .map(|&w| {
                    let t = rng.gen_range(0..k);
                    dt[t] += 1;
                    word_topic[t * vocab_size + w] += 1;
                    topic_totals[t] += 1;
                    t as u32
                })
                .collect();
            doc_topic.push(dt);
            assignments.push(z);
        }
        Ok(LdaSampler {
            docs,
            n_topics: k,
            vocab_size,
            alpha: config.alpha(),
            beta: config.beta,
            assignments,
            doc_topic,
            word_topic,
            topic_totals,
            rng,
            weights: vec![0.0; k],
        })
    }

    /// One full pass over every token.
    pub fn sweep(&mut self) {
        let (k, v) = (self.n_topics, self.vocab_size);
        let vbeta = v as f64 * self.beta;
        for (d, doc) in self.docs.iter().enumerate() {
            let dt = &mut self.doc_topic[d];
            let z = &mut self.assignments[d];
            for (i, &w) in doc.iter().enumerate() {
                let old = z[i] as usize;
                dt[old] -= 1;
                self.word_topic[old * v + w] -= 1;
                self.topic_totals[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (dt[t] as f64 + self.alpha)
                        * (self.word_topic[t * v + w] as f64 + self.beta)
                        / (self.topic_totals[t] as f64 + vbeta);
                    total += p;
                    self.weights[t] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                let new = self.weights.partition_point(|&c| c <= u).min(k - 1);

                z[i] = new as u32;
                dt[new] += 1;
                self.word_topic[new * v + w] += 1;
                self.topic_totals[new] += 1;
            }
        }
    }

    pub fn topic_totals(&self) -> &[u64] {
        &self.topic_totals
    }

    pub fn word_topic_counts(&self) -> &[u32] {
        &self.word_topic
    }

    pub fn into_model(self, vocab: Vocabulary, config: &LdaConfig) -> TopicModel {
        TopicModel::from_counts(
            vocab,
            self.word_topic,
            config.n_topics,
            self.alpha,
            self.beta,
            config.seed,
            config.iterations,
            config.fold_iters,
        )
    }
}

/// Fits LDA on `corpus` (bags of ids into `vocab`) with `config.iterations` sweeps.
pub fn fit_lda(corpus: &[Vec<usize>], vocab: Vocabulary, config: &LdaConfig) -> Result<TopicModel> {
    let mut sampler = LdaSampler::new(corpus, vocab.len(), config)?;
    for _ in 0..config.iterations {
        sampler.sweep();
    }
    Ok(sampler.into_model(vocab, config))
}

impl TopicModel {
    #[allow(clippy::too_many_arguments)]
    fn from_counts(
        vocab: Vocabulary,
        word_topic_counts: Vec<u32>,
        n_topics: usize,
        alpha: f64,
        beta: f64,
        seed: u64,
        iterations: usize,
        fold_iters: usize,
    ) -> Self {
        let v = vocab.len();
        let topic_totals: Vec<u64> = (0..n_topics)
            .map(|k| word_topic_counts[k * v..(k + 1) * v].iter().map(|&c| c as u64).sum())
            .collect();
        let mut phi = vec![0.0; v * n_topics];
        for k in 0..n_topics {
            let denom = topic_totals[k] as f64 + v as f64 * beta;
            for w in 0..v {
                phi[w * n_topics + k] = (word_topic_counts[k * v + w] as f64 + beta) / denom;
            }
        }
        TopicModel {
            n_topics,
            vocab,
            word_topic_counts,
            topic_totals,
            alpha,
            beta,
            seed,
            iterations,
            fold_iters,
            phi,
        }
    }

    /// `p(word | topic)` under the fitted counts.
    pub fn word_prob(&self, topic: usize, word: usize) -> f64 {
        self.phi[word * self.n_topics + topic]
    }

    /// Topic-word distribution of `topic` over the vocabulary.
    pub fn topic_word_distribution(&self, topic: usize) -> Vec<f64> {
        (0..self.vocab.len()).map(|w| self.word_prob(topic, w)).collect()
    }

    /// Fold-in Gibbs estimate of a document's topic mixture with topic-word
    /// statistics frozen. Averages the smoothed document-topic proportions
    /// over the second half of `fold_iters` sweeps.
    pub fn infer(&self, bag: &[usize], seed: u64) -> TopicDistribution {
        let k = self.n_topics;
        if bag.is_empty() || self.fold_iters == 0 {
            return TopicDistribution::uniform(k);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dt = vec![0u32; k];
        let mut z: Vec<usize> = bag
            .iter()
            .map(|_| {
                let t = rng.gen_range(0..k);
                dt[t] += 1;
                t
            })
            .collect();
        let mut weights = vec![0.0; k];
        let mut acc = vec![0.0; k];
        let burn = self.fold_iters / 2;
        let norm = bag.len() as f64 + k as f64 * self.alpha;
        for it in 0..self.fold_iters {
            for (i, &w) in bag.iter().enumerate() {
                dt[z[i]] -= 1;
                let phi = &self.phi[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    total += (dt[t] as f64 + self.alpha) * phi[t];
                    weights[t] = total;
                }
                let u = rng.gen::<f64>() * total;
                let new = weights.partition_point(|&c| c <= u).min(k - 1);
                z[i] = new;
                dt[new] += 1;
            }
            if it >= burn {
                for t in 0..k {
                    acc[t] += (dt[t] as f64 + self.alpha) / norm;
                }
            }
        }
        let s: f64 = acc.iter().sum();
        TopicDistribution {
            probs: acc.into_iter().map(|a| a / s).collect(),
        }
    }

    /// Topic mixture of a dialogue, seeded from the model seed and the dialogue id
    /// so the result does not depend on evaluation order.
    pub fn infer_dialogue(&self, d: &Dialogue, stopwords: &HashSet<String>) -> TopicDistribution {
        let bag = lda_preprocess(d, &self.vocab, stopwords);
        self.infer(&bag, self.seed ^ label_hash(&d.id))
    }

    /// `k` most probable words of `topic`, ties broken lexicographically.
    pub fn top_words(&self, topic: usize, k: usize) -> Result<Vec<(String, f64)>> {
        if topic >= self.n_topics {
            return Err(Error::Config(format!(
                "topic {topic} out of range for {} topics",
                self.n_topics
            )));
        }
        let mut words: Vec<(usize, f64)> = (0..self.vocab.len())
            .map(|w| (w, self.word_prob(topic, w)))
            .collect();
        words.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.vocab.word(a.0).cmp(self.vocab.word(b.0)))
        });
        Ok(words
            .into_iter()
            .take(k)
            .map(|(w, p)| (self.vocab.word(w).to_string(), p))
            .collect())
    }

    pub fn to_container(&self) -> Result<Container> {
        let max = self.word_topic_counts.iter().copied().max().unwrap_or(0);
        if max > (1 << 24) {
            return Err(Error::Format(format!(
                "count {max} is not exactly representable in the container"
            )));
        }
        let v = self.vocab.len();
        let counts = Tensor::from_vec(
            self.n_topics,
            v,
            self.word_topic_counts.iter().map(|&c| c as f32).collect(),
        )?;
        let meta = serde_json::to_value(TopicHeader {
            n_topics: self.n_topics,
            alpha: self.alpha,
            beta: self.beta,
            seed: self.seed,
            iterations: self.iterations,
            fold_iters: self.fold_iters,
            vocab: self.vocab.words().to_vec(),
        })
        .expect("header serializes");
        Ok(Container {
            format: FORMAT.into(),
            meta,
            tensors: vec![("word_topic_counts".into(), counts)],
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path, FORMAT)?)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let h: TopicHeader = serde_json::from_value(c.meta.clone())
            .map_err(|e| Error::Format(format!("topic model header: {e}")))?;
        let counts = c.tensor("word_topic_counts")?;
        if counts.shape() != [h.n_topics, h.vocab.len()] {
            return Err(Error::Format(format!(
                "count matrix {:?} does not match {} topics × {} words",
                counts.shape(),
                h.n_topics,
                h.vocab.len()
            )));
        }
        let wt = counts
            .data()
            .iter()
            .map(|&c| {
                if c >= 0.0 && c.fract() == 0.0 {
                    Ok(c as u32)
                } else {
                    Err(Error::Format(format!("invalid count {c}")))
                }
            })
            .collect::<Result<Vec<u32>>>()?;
        Ok(TopicModel::from_counts(
            Vocabulary::from_words(h.vocab),
            wt,
            h.n_topics,
            h.alpha,
            h.beta,
            h.seed,
            h.iterations,
            h.fold_iters,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct TopicHeader {
    n_topics: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    iterations: usize,
    fold_iters: usize,
    vocab: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dialogue(id: &str, text: &str) -> Dialogue {
        let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
        Dialogue {
            id: id.into(),
            turns: vec![text.into()],
            tokens,
            turn_starts: vec![0],
            pronouns: vec![],
        }
    }

    fn stop(words: &[&str]) -> HashSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn preprocess_folds_case_and_drops_stopwords() {
        let d = dialogue("a", "the Player hits the ball");
        let sw = stop(&["the"]);
        let vocab = Vocabulary::build(std::slice::from_ref(&d), 1, &sw);
        let bag: Vec<&str> = lda_preprocess(&d, &vocab, &sw)
            .into_iter()
            .map(|w| vocab.word(w))
            .collect();
        assert_eq!(bag, vec!["player", "hits", "ball"]);
        let only_stop = dialogue("b", "the THE the");
        assert!(lda_preprocess(&only_stop, &vocab, &sw).is_empty());
        let unseen = dialogue("c", "kitchen player");
        let bag = lda_preprocess(&unseen, &vocab, &sw);
        assert_eq!(bag.len(), 1);
    }

    #[test]
    fn min_freq_filters_vocabulary() {
        let d = dialogue("a", "ball ball ball bat bat glove");
        let vocab = Vocabulary::build(&[d], 2, &HashSet::new());
        assert_eq!(vocab.words(), &["ball".to_string(), "bat".to_string()]);
    }

    fn config(k: usize, iters: usize) -> LdaConfig {
        LdaConfig {
            n_topics: k,
            iterations: iters,
            ..LdaConfig::default()
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let vocab = Vocabulary::from_words(vec!["a".into()]);
        assert!(fit_lda(&[vec![0]], vocab.clone(), &config(1, 1)).is_err());
        assert!(fit_lda(&[], vocab, &config(2, 1)).is_err());
        assert!(fit_lda(&[vec![]], Vocabulary::from_words(vec![]), &config(2, 1)).is_err());
    }

    #[test]
    fn degenerate_vocabulary() {
        let vocab = Vocabulary::from_words(vec!["ball".into()]);
        let docs = vec![vec![0; 10]; 5];
        let m = fit_lda(&docs, vocab, &config(3, 20)).unwrap();
        for k in 0..3 {
            assert_eq!(m.top_words(k, 1).unwrap()[0].0, "ball");
        }
        assert_eq!(m.top_words(0, 5).unwrap().len(), 1);
        assert!(m.top_words(3, 1).is_err());
    }

    #[test]
    fn tokens_are_conserved_every_sweep() {
        let docs: Vec<Vec<usize>> = (0..20).map(|d| (0..15).map(|i| (d * 7 + i) % 9).collect()).collect();
        let total: u64 = docs.iter().map(|d| d.len() as u64).sum();
        let mut s = LdaSampler::new(&docs, 9, &config(4, 0)).unwrap();
        for _ in 0..25 {
            s.sweep();
            assert_eq!(s.topic_totals().iter().sum::<u64>(), total);
            let wt: u64 = s.word_topic_counts().iter().map(|&c| c as u64).sum();
            assert_eq!(wt, total);
        }
    }

    #[test]
    fn empty_bag_infers_uniform() {
        let vocab = Vocabulary::from_words(vec!["a".into(), "b".into()]);
        let m = fit_lda(&[vec![0, 1, 1]], vocab, &config(4, 5)).unwrap();
        assert_eq!(m.infer(&[], 1).probs, vec![0.25; 4]);
        let p = m.infer(&[0, 1, 0], 9);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.probs.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn same_seed_same_model_and_container_round_trip() {
        let docs: Vec<Vec<usize>> = (0..10).map(|d| (0..12).map(|i| (d + i * 3) % 6).collect()).collect();
        let vocab = Vocabulary::from_words((0..6).map(|i| format!("w{i}")).collect());
        let a = fit_lda(&docs, vocab.clone(), &config(3, 30)).unwrap();
        let b = fit_lda(&docs, vocab, &config(3, 30)).unwrap();
        assert_eq!(a, b);
        let bytes = a.to_container().unwrap().to_bytes();
        assert_eq!(bytes, b.to_container().unwrap().to_bytes());
        let back = TopicModel::from_container(&Container::from_bytes(&bytes, FORMAT).unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.infer(&[1, 2, 3], 4), a.infer(&[1, 2, 3], 4));
    }
}
