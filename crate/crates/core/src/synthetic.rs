//! Seeded toy corpora with known structure, for tests, benchmarks and demos.
//!
//! Every word has a fixed random vector. A token's "contextual" embedding is
//! its word vector plus noise; a pronoun's embedding additionally mixes in a
//! cue vector (its antecedent or referent word) when the scenario makes the
//! referent locally visible. The dialogue vector is the mean token embedding.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CategorySpec, Dialogue, MentionSpan, ObjectPool, PoolSpec, PronounInstance};
use crate::error::Result;
use crate::numerics::Tensor;
use crate::scorer::{DialogueEmbeddings, EmbeddingStore};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Referents are visible in the pronoun embedding; a mix of Discussed,
    /// Not Discussed and in-text-only pronouns.
    Overfit,
    /// The gold object is a function of the dialogue topic, and nothing in the
    /// pronoun embedding reveals it.
    TopicSignal,
    /// The pool holds pairs where the first member lists the second as a
    /// synonym but not the reverse. The pronoun reveals the pair only; the
    /// gold is the first member with probability `primary_share`.
    Masking,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub scenario: Scenario,
    pub dim: usize,
    pub n_objects: usize,
    pub n_topics: usize,
    pub words_per_topic: usize,
    pub fillers: usize,
    pub pronouns_per_dialogue: usize,
    /// Background tokens between consecutive mentions.
    pub gap: usize,
    pub cue_strength: f64,
    pub noise: f64,
    pub primary_share: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(scenario: Scenario) -> Self {
        SyntheticConfig {
            scenario,
            dim: 64,
            n_objects: 20,
            n_topics: 5,
            words_per_topic: 8,
            fillers: 12,
            pronouns_per_dialogue: 3,
            gap: 3,
            cue_strength: 0.7,
            noise: 0.3,
            primary_share: 0.6,
            seed: 7,
        }
    }
}

/// Non-pool nouns that serve as in-text-only antecedents.
const NOUNS: usize = 10;

/// Fixed vocabulary, word vectors and object pool shared by all splits.
#[derive(Clone, Debug)]
pub struct World {
    pub config: SyntheticConfig,
    spec: PoolSpec,
    pool: ObjectPool,
    /// Name tokens per pool category, canonical order.
    names: Vec<Vec<String>>,
}

/// Dialogues sampled from a [`World`] with their embeddings and latent topics.
#[derive(Clone, Debug)]
pub struct Split {
    pub dialogues: Vec<Dialogue>,
    pub embeddings: Vec<DialogueEmbeddings>,
    pub topics: Vec<usize>,
}

fn object_word(i: usize) -> String {
    format!("obj{i:02}")
}

fn topic_word(k: usize, j: usize) -> String {
    format!("topic{}word{}", letter(k), letter(j))
}

fn letter(i: usize) -> String {
    // Letters only, so the words survive topic-model preprocessing.
    let mut s = String::new();
    let mut i = i;
    loop {
        s.insert(0, (b'a' + (i % 26) as u8) as char);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s
}

impl World {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        let cat = |id: String, synonyms: Vec<String>| CategorySpec {
            name: id.clone(),
            id,
            synonyms,
            ..CategorySpec::default()
        };
        let mut categories = Vec::new();
        match config.scenario {
            Scenario::Masking => {
                for i in 0..config.n_objects / 2 {
                    let alt = format!("{} alt", object_word(i));
                    categories.push(cat(object_word(i), vec![alt.clone()]));
                    categories.push(cat(alt, vec![]));
                }
            }
            _ => {
                for i in 0..config.n_objects {
                    categories.push(cat(object_word(i), vec![]));
                }
            }
        }
        let spec = PoolSpec { categories };
        let (pool, _) = ObjectPool::from_spec(spec.clone())?;
        let names = pool
            .categories()
            .iter()
            .map(|c| c.id.split(' ').map(str::to_string).collect())
            .collect();
        Ok(World {
            config,
            spec,
            pool,
            names,
        })
    }

    pub fn pool(&self) -> &ObjectPool {
        &self.pool
    }

    pub fn pool_spec(&self) -> &PoolSpec {
        &self.spec
    }

    fn word_vec(&self, word: &str) -> Vec<f64> {
        let mut rng = seed::rng(self.config.seed, &format!("word:{word}"));
        unit_noise(&mut rng, self.config.dim)
    }

    fn embed(&self, word: &str, cue: Option<&str>, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = self.word_vec(word);
        if let Some(c) = cue {
            for (x, y) in v.iter_mut().zip(self.word_vec(c)) {
                *x += self.config.cue_strength * y;
            }
        }
        for (x, n) in v.iter_mut().zip(unit_noise(rng, self.config.dim)) {
            *x += self.config.noise * n;
        }
        v
    }

    /// Samples `n` dialogues with ids `{prefix}{index:04}`.
    pub fn sample(&self, n: usize, split_seed: u64, prefix: &str) -> Split {
        let mut rng = seed::rng(self.config.seed ^ split_seed, &format!("split:{prefix}"));
        let mut split = Split {
            dialogues: Vec::with_capacity(n),
            embeddings: Vec::with_capacity(n),
            topics: Vec::with_capacity(n),
        };
        for i in 0..n {
            let topic = rng.gen_range(0..self.config.n_topics);
            let (d, e) = self.dialogue(format!("{prefix}{i:04}"), topic, &mut rng);
            split.dialogues.push(d);
            split.embeddings.push(e);
            split.topics.push(topic);
        }
        split
    }

    /// Embedding store with every pool object and the dialogues of `splits`.
    pub fn store(&self, splits: &[&Split]) -> Result<EmbeddingStore> {
        let mut store = EmbeddingStore::new(self.config.dim);
        for (c, name) in self.pool.categories().iter().zip(&self.names) {
            let mut data = Vec::new();
            for w in name {
                data.extend(self.word_vec(w).into_iter().map(|x| x as f32));
            }
            store.insert_object(&c.id, Tensor::from_vec(name.len(), self.config.dim, data)?)?;
        }
        for s in splits {
            for (d, e) in s.dialogues.iter().zip(&s.embeddings) {
                store.insert_dialogue(&d.id, e.clone())?;
            }
        }
        Ok(store)
    }

    fn background(&self, topic: usize, rng: &mut ChaCha8Rng) -> String {
        if rng.gen_bool(0.6) {
            topic_word(topic, rng.gen_range(0..self.config.words_per_topic))
        } else {
            format!("filler{}", letter(rng.gen_range(0..self.config.fillers)))
        }
    }

    fn dialogue(&self, id: String, topic: usize, rng: &mut ChaCha8Rng) -> (Dialogue, DialogueEmbeddings) {
        let cfg = &self.config;
        let mut words: Vec<String> = Vec::new();
        let mut cues: Vec<Option<String>> = Vec::new();
        let mut pronouns = Vec::new();
        fn push(words: &mut Vec<String>, cues: &mut Vec<Option<String>>, w: String, cue: Option<String>) -> usize {
            words.push(w);
            cues.push(cue);
            words.len() - 1
        }

        for j in 0..cfg.pronouns_per_dialogue {
            for _ in 0..cfg.gap {
                let w = self.background(topic, rng);
                push(&mut words, &mut cues, w, None);
            }
            let plan = self.plan_pronoun(j, topic, rng);
            let mut candidates = Vec::new();
            let mut gold_intext = Vec::new();
            for (k, (noun, gold)) in plan.mentions.iter().enumerate() {
                let s = push(&mut words, &mut cues, "the".into(), None);
                let e = push(&mut words, &mut cues, noun.clone(), None);
                candidates.push(MentionSpan::new(s, e));
                if *gold {
                    gold_intext.push(k);
                }
                for _ in 0..cfg.gap {
                    let w = self.background(topic, rng);
                    push(&mut words, &mut cues, w, None);
                }
            }
            let p = push(&mut words, &mut cues, "it".into(), plan.cue);
            pronouns.push(PronounInstance {
                span: MentionSpan::new(p, p),
                candidates,
                gold_intext,
                gold_object: plan.gold_object,
            });
            let w = self.background(topic, rng);
            push(&mut words, &mut cues, w, None);
        }

        let mut data = Vec::with_capacity(words.len() * cfg.dim);
        let mut mean = vec![0.0; cfg.dim];
        for (w, c) in words.iter().zip(&cues) {
            let v = self.embed(w, c.as_deref(), rng);
            for (m, x) in mean.iter_mut().zip(&v) {
                *m += x / words.len() as f64;
            }
            data.extend(v.into_iter().map(|x| x as f32));
        }
        let n = words.len();
        let per_turn = n.div_ceil(3);
        let turn_starts: Vec<usize> = (0..n).step_by(per_turn).collect();
        let turns = turn_starts
            .iter()
            .map(|&s| words[s..(s + per_turn).min(n)].join(" "))
            .collect();
        let d = Dialogue {
            id,
            turns,
            tokens: words,
            turn_starts,
            pronouns,
        };
        let e = DialogueEmbeddings {
            tokens: Tensor::from_vec(n, cfg.dim, data).expect("sized"),
            vector: Tensor::row_vector(mean.into_iter().map(|x| x as f32).collect()),
        };
        (d, e)
    }

    fn plan_pronoun(&self, j: usize, topic: usize, rng: &mut ChaCha8Rng) -> PronounPlan {
        let cfg = &self.config;
        match cfg.scenario {
            Scenario::TopicSignal => PronounPlan {
                mentions: vec![],
                cue: None,
                gold_object: Some(object_word(topic % cfg.n_objects)),
            },
            Scenario::Masking => {
                let pair = rng.gen_range(0..cfg.n_objects / 2);
                let base = object_word(pair);
                let gold = if rng.gen_bool(cfg.primary_share) {
                    base.clone()
                } else {
                    format!("{base} alt")
                };
                PronounPlan {
                    mentions: vec![],
                    cue: Some(base),
                    gold_object: Some(gold),
                }
            }
            Scenario::Overfit => {
                let nouns: Vec<String> = (0..cfg.n_objects)
                    .map(object_word)
                    .chain((0..NOUNS).map(|i| format!("noun{}", letter(i))))
                    .collect();
                let object = rng.gen_range(0..cfg.n_objects);
                let (antecedent, gold_object) = match j % 3 {
                    0 => (Some(nouns[object].clone()), Some(nouns[object].clone())),
                    1 => (None, Some(nouns[object].clone())),
                    _ => (Some(nouns[cfg.n_objects + rng.gen_range(0..NOUNS)].clone()), None),
                };
                let cue = antecedent.clone().or_else(|| gold_object.clone());
                let mut others: Vec<&String> =
                    nouns.iter().filter(|n| Some(*n) != cue.as_ref()).collect();
                others.shuffle(rng);
                let mut mentions: Vec<(String, bool)> =
                    others.into_iter().take(2).map(|n| (n.clone(), false)).collect();
                if let Some(a) = antecedent {
                    let at = rng.gen_range(0..=mentions.len());
                    mentions.insert(at, (a, true));
                }
                PronounPlan {
                    mentions,
                    cue,
                    gold_object,
                }
            }
        }
    }
}

struct PronounPlan {
    /// Candidate mention nouns and whether each is a gold antecedent.
    mentions: Vec<(String, bool)>,
    cue: Option<String>,
    gold_object: Option<String>,
}

/// Components with zero mean and variance `1/dim`, so vectors have norm near 1.
fn unit_noise(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let a = (3.0 / dim as f64).sqrt();
    (0..dim).map(|_| rng.gen_range(-a..a)).collect()
}
