use std::collections::HashSet;

use log::info;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::loss::{dialogue_loss, LossOptions};
use crate::corpus::{Dialogue, ObjectPool};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, MetricsReport};
use crate::numerics::{Adam, AdamConfig, Tape, Tensor};
use crate::scorer::{forward_dialogue, EmbeddingStore, ObjectBank, ScorerConfig, ScorerParams};
use crate::seed;
use crate::topics::TopicModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Run seed; initialization and shuffling use named sub-seeds of it.
    pub seed: u64,
    pub optimizer: AdamConfig,
    /// Model sizes; `n_topics` must match the topic model.
    pub scorer: ScorerConfig,
    pub loss: LossOptions,
    /// Also used for the per-epoch dev evaluation.
    pub eval: EvalOptions,
}

impl TrainConfig {
    pub fn new(d_emb: usize, n_topics: usize) -> Self {
        TrainConfig {
            epochs: 10,
            seed: 13,
            optimizer: AdamConfig::default(),
            scorer: ScorerConfig::new(d_emb, n_topics),
            loss: LossOptions::default(),
            eval: EvalOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.scorer.n_topics < 2 {
            return Err(Error::Config("n_topics must be at least 2".into()));
        }
        if self.optimizer.learning_rate.is_nan() || self.optimizer.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Everything one training run reads.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub train: &'a [Dialogue],
    pub dev: &'a [Dialogue],
    pub store: &'a EmbeddingStore,
    pub pool: &'a ObjectPool,
    /// LDA topic label of each training dialogue, aligned with `train`.
    pub topic_labels: &'a [Vec<f64>],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub total: f64,
    pub in_text: f64,
    pub out_of_text: f64,
    pub topic: f64,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed over the epoch's dialogues.
    pub train_loss: LossSummary,
    pub dev: Option<MetricsReport>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub log: Vec<EpochRecord>,
}

/// Fold-in topic labels for `dialogues` under a fitted model.
pub fn topic_labels(model: &TopicModel, dialogues: &[Dialogue], stopwords: &HashSet<String>) -> Vec<Vec<f64>> {
    dialogues
        .iter()
        .map(|d| model.infer_dialogue(d, stopwords).probs)
        .collect()
}

/// Returned by the per-epoch callback of [`train`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpochControl {
    Continue,
    /// End training after this epoch.
    Stop,
}

/// Trains one dialogue per step for `config.epochs` epochs, evaluating on
/// `data.dev` after each epoch and keeping the epoch with the best selection
/// metric (the last epoch when there is no dev split). `on_epoch` sees each
/// log record as it is produced and may end training early.
pub fn train(
    config: &TrainConfig,
    data: &TrainData,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<EpochControl>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.topic_labels.len() != data.train.len() {
        return Err(Error::Validation(format!(
            "{} topic labels for {} training dialogues",
            data.topic_labels.len(),
            data.train.len()
        )));
    }
    if data.store.dim() != config.scorer.d_emb {
        return Err(Error::Config(format!(
            "embedding width {} but scorer expects {}",
            data.store.dim(),
            config.scorer.d_emb
        )));
    }
    let bank = ObjectBank::new(data.store, data.pool)?;
    let mut params = ScorerParams::<f32>::init(config.scorer.clone(), config.seed);
    let shapes: Vec<[usize; 2]> = params.tensors().iter().map(Tensor::shape).collect();
    let mut adam = Adam::new(config.optimizer.clone(), shapes.iter().copied());
    let mut shuffle = seed::rng(config.seed, "shuffle");
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let req = config.loss.request();

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let mut sums = LossSummary::default();
        for &i in &order {
            let d = &data.train[i];
            let emb = data.store.dialogue(&d.id)?;
            let mut tape = Tape::<f32>::new();
            let bound = params.bind(&mut tape, true);
            let fwd = forward_dialogue(&mut tape, &bound, &config.scorer, d, emb, &bank, req)?;
            let terms = dialogue_loss(
                &mut tape,
                &fwd,
                d,
                data.pool,
                Some(&data.topic_labels[i]),
                &config.loss,
            )?;
            let total = tape.scalar(terms.total) as f64;
            if !total.is_finite() {
                return Err(Error::NonFinite(format!("dialogue {}: loss is {total}", d.id)));
            }
            sums.total += total;
            sums.in_text += terms.in_text;
            sums.out_of_text += terms.out_of_text;
            sums.topic += terms.topic;
            let mut grads = tape.backward(terms.total)?;
            let grads: Vec<Tensor<f32>> = bound
                .vars()
                .iter()
                .zip(&shapes)
                .map(|(&v, &s)| grads.take_or_zeros(v, s))
                .collect();
            adam.step(params.tensors_mut(), &grads).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("dialogue {}: {m}", d.id)),
                e => e,
            })?;
        }

        let dev = if data.dev.is_empty() {
            None
        } else {
            Some(evaluate(&params, &bank, data.store, data.pool, data.dev, "dev", &config.eval)?.report)
        };
        let record = EpochRecord {
            epoch,
            train_loss: sums,
            dev: dev.clone(),
        };
        info!(
            "epoch {epoch}: loss {:.4} (in-text {:.4}, out-of-text {:.4}, topic {:.4}){}",
            sums.total,
            sums.in_text,
            sums.out_of_text,
            sums.topic,
            dev.as_ref().map_or(String::new(), |r| format!(", dev selection {:.4}", r.selection))
        );
        let control = on_epoch(&record)?;
        log.push(record);

        let improves = match (&best, &dev) {
            (None, _) | (_, None) => true,
            (Some(b), Some(r)) => r.selection > b.dev.as_ref().map_or(f64::NEG_INFINITY, |m| m.selection),
        };
        if improves {
            best = Some(Checkpoint {
                params: params.clone(),
                config: config.clone(),
                epoch,
                dev,
            });
        }
        if control == EpochControl::Stop {
            break;
        }
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch"),
        log,
    })
}
