use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::seed;

/// Span length buckets: 1, 2, 3, 4, 5-7, 8-15, 16-31, 32+.
pub const WIDTH_BUCKETS: usize = 8;

pub fn width_bucket(len: usize) -> usize {
    match len {
        0 | 1 => 0,
        2 => 1,
        3 => 2,
        4 => 3,
        5..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        _ => 7,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Width of the frozen token embeddings.
    pub d_emb: usize,
    pub d_width: usize,
    /// Width of the dialogue topic embedding.
    pub d_tp: usize,
    /// Hidden width of the attention, local and global heads.
    pub hidden: usize,
    /// Hidden width of the topic-prediction head.
    pub topic_hidden: usize,
    pub n_topics: usize,
    /// Adds the topic relevance terms to every score when set.
    pub use_global: bool,
}

impl ScorerConfig {
    pub fn new(d_emb: usize, n_topics: usize) -> Self {
        ScorerConfig {
            d_emb,
            d_width: 20,
            d_tp: 200,
            hidden: 150,
            topic_hidden: 1000,
            n_topics,
            use_global: true,
        }
    }

    pub fn span_dim(&self) -> usize {
        3 * self.d_emb + self.d_width
    }

    fn shapes(&self) -> [[usize; 2]; N_PARAMS] {
        let (d, h, s, tp) = (self.d_emb, self.hidden, self.span_dim(), self.d_tp);
        [
            [h, d],
            [1, h],
            [1, h],
            [1, 1],
            [WIDTH_BUCKETS, self.d_width],
            [h, 3 * s],
            [1, h],
            [1, h],
            [1, 1],
            [tp, d],
            [1, tp],
            [tp, s],
            [h, 3 * tp],
            [1, h],
            [1, h],
            [1, 1],
            [self.topic_hidden, tp],
            [1, self.topic_hidden],
            [self.n_topics, self.topic_hidden],
            [1, self.n_topics],
        ]
    }
}

/// Index of each trainable tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamId {
    AttnW1 = 0,
    AttnB1,
    AttnW2,
    AttnB2,
    WidthTable,
    LocalW1,
    LocalB1,
    LocalW2,
    LocalB2,
    TopicW,
    TopicB,
    AlignW,
    GlobalW1,
    GlobalB1,
    GlobalW2,
    GlobalB2,
    PredW1,
    PredB1,
    PredW2,
    PredB2,
}

pub const N_PARAMS: usize = 20;

pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "attention.w1",
    "attention.b1",
    "attention.w2",
    "attention.b2",
    "width.table",
    "local.w1",
    "local.b1",
    "local.w2",
    "local.b2",
    "topic.w",
    "topic.b",
    "align.w",
    "global.w1",
    "global.b1",
    "global.w2",
    "global.b2",
    "predict.w1",
    "predict.b1",
    "predict.w2",
    "predict.b2",
];

/// Which tensors are biases (zero-initialized).
const IS_BIAS: [bool; N_PARAMS] = [
    false, true, false, true, false, false, true, false, true, false, true, false, false, true,
    false, true, false, true, false, true,
];

/// All trainable head weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams<T> {
    pub config: ScorerConfig,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ScorerParams<T> {
    /// Weights uniform in `±1/√fan_in`, biases zero. The width table is a
    /// one-hot lookup, so its fan-in is one.
    pub fn init(config: ScorerConfig, run_seed: u64) -> Self {
        let mut rng = seed::rng(run_seed, "init");
        let tensors = config
            .shapes()
            .iter()
            .enumerate()
            .map(|(i, &[r, c])| {
                if IS_BIAS[i] {
                    Tensor::zeros(r, c)
                } else {
                    let fan_in = if i == ParamId::WidthTable as usize { 1 } else { c };
                    Tensor::uniform(r, c, 1.0 / (fan_in as f64).sqrt(), &mut rng)
                }
            })
            .collect();
        ScorerParams { config, tensors }
    }

    pub fn zeros(config: ScorerConfig) -> Self {
        let tensors = config
            .shapes()
            .iter()
            .map(|&[r, c]| Tensor::zeros(r, c))
            .collect();
        ScorerParams { config, tensors }
    }

    pub fn from_tensors(config: ScorerConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = config.shapes();
        if tensors.len() != N_PARAMS {
            return Err(Error::Format(format!(
                "{} parameter tensors, expected {N_PARAMS}",
                tensors.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.shape() != shapes[i] {
                return Err(Error::Format(format!(
                    "{} has shape {:?}, expected {:?}",
                    PARAM_NAMES[i],
                    t.shape(),
                    shapes[i]
                )));
            }
        }
        Ok(ScorerParams { config, tensors })
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor<T>)> {
        PARAM_NAMES.iter().copied().zip(&self.tensors)
    }

    pub fn cast<U: Scalar>(&self) -> ScorerParams<U> {
        ScorerParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Places every tensor on `tape`, as tracked leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        BoundParams { vars }
    }
}

impl<T> Index<ParamId> for ScorerParams<T> {
    type Output = Tensor<T>;

    fn index(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id as usize]
    }
}

impl<T> IndexMut<ParamId> for ScorerParams<T> {
    fn index_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id as usize]
    }
}

/// Tape handles for one [`ScorerParams`], in [`ParamId`] order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    /// Wraps handles already on a tape, in [`ParamId`] order.
    pub fn from_vars(vars: Vec<Var>) -> Result<Self> {
        if vars.len() != N_PARAMS {
            return Err(Error::Format(format!("{} parameter handles, expected {N_PARAMS}", vars.len())));
        }
        Ok(BoundParams { vars })
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id as usize]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_buckets() {
        let expect = [(1, 0), (2, 1), (3, 2), (4, 3), (5, 4), (7, 4), (8, 5), (15, 5), (16, 6), (31, 6), (32, 7), (400, 7)];
        for (len, b) in expect {
            assert_eq!(width_bucket(len), b, "len {len}");
        }
    }

    #[test]
    fn default_sizes() {
        let c = ScorerConfig::new(768, 40);
        assert_eq!(c.span_dim(), 3 * 768 + 20);
        assert_eq!(c.topic_hidden, 1000);
        let p = ScorerParams::<f32>::init(ScorerConfig::new(8, 5), 1);
        assert_eq!(p[ParamId::PredW1].shape(), [1000, 200]);
        assert_eq!(p[ParamId::PredW2].shape(), [5, 1000]);
        assert_eq!(p[ParamId::LocalW1].shape(), [150, 3 * (24 + 20)]);
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let p = ScorerParams::<f64>::init(ScorerConfig::new(16, 4), 3);
        let bound = 1.0 / (16f64).sqrt();
        assert!(p[ParamId::AttnW1].data().iter().all(|v| v.abs() <= bound));
        assert!(p[ParamId::LocalB1].data().iter().all(|&v| v == 0.0));
        assert_eq!(p, ScorerParams::init(ScorerConfig::new(16, 4), 3));
        assert_ne!(p, ScorerParams::init(ScorerConfig::new(16, 4), 4));
    }

    #[test]
    fn from_tensors_checks_shapes() {
        let c = ScorerConfig::new(4, 2);
        let mut t = ScorerParams::<f32>::zeros(c.clone()).tensors().to_vec();
        assert!(ScorerParams::from_tensors(c.clone(), t.clone()).is_ok());
        t[3] = Tensor::zeros(2, 2);
        assert!(ScorerParams::from_tensors(c, t).is_err());
    }
}
