use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, ObjectPool};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::scorer::{DialogueForward, ForwardRequest, ObjectScoring};

/// Marginal log-likelihood of the gold antecedents:
/// `lse(all candidate scores) − lse(gold scores)`.
pub fn loss_in_text<T: Scalar>(tape: &mut Tape<T>, scores: Var, gold: &[usize]) -> Result<Var> {
    let n = column_len(tape, "loss_in_text", scores)?;
    if gold.is_empty() {
        return Err(Error::Validation("in-text loss needs at least one gold antecedent".into()));
    }
    if let Some(&g) = gold.iter().find(|&&g| g >= n) {
        return Err(Error::Validation(format!("gold antecedent {g} not among {n} candidates")));
    }
    let all: Vec<usize> = (0..n).collect();
    let den = tape.log_sum_exp(scores, &all)?;
    let num = tape.log_sum_exp(scores, gold)?;
    tape.sub(den, num)
}

/// `lse(scores over pool \ mask) − score(gold)`.
pub fn loss_out_of_text<T: Scalar>(
    tape: &mut Tape<T>,
    scores: Var,
    gold: usize,
    mask: &BTreeSet<usize>,
) -> Result<Var> {
    let n = column_len(tape, "loss_out_of_text", scores)?;
    if gold >= n {
        return Err(Error::Validation(format!("gold object {gold} outside pool of {n}")));
    }
    assert!(!mask.contains(&gold), "gold object {gold} is in its own mask set");
    let keep: Vec<usize> = (0..n).filter(|i| !mask.contains(i)).collect();
    let den = tape.log_sum_exp(scores, &keep)?;
    let num = tape.log_sum_exp(scores, &[gold])?;
    tape.sub(den, num)
}

fn column_len<T: Scalar>(tape: &Tape<T>, op: &'static str, v: Var) -> Result<usize> {
    match tape.shape(v) {
        [n, 1] if n > 0 => Ok(n),
        s => Err(Error::shape(op, format!("scores must be a non-empty column, got {s:?}"))),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicLossKind {
    /// `½‖softmax(z) − p̂‖²`.
    #[default]
    L2,
    /// `KL(p̂ ‖ softmax(z))`.
    Kl,
    /// Per-topic binary cross-entropy of `sigmoid(z)` against `p̂`.
    SigmoidCe,
}

impl std::str::FromStr for TopicLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(TopicLossKind::L2),
            "kl" => Ok(TopicLossKind::Kl),
            "sigmoid_ce" | "sigmoid-ce" => Ok(TopicLossKind::SigmoidCe),
            _ => Err(Error::Config(format!("unknown topic loss {s:?} (l2, kl, sigmoid_ce)"))),
        }
    }
}

/// Topic-prediction loss of `logits` (`1 × n`) against the LDA label `target`.
pub fn loss_topic<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    target: &[f64],
    kind: TopicLossKind,
) -> Result<Var> {
    let [r, n] = tape.shape(logits);
    if r != 1 || n != target.len() {
        return Err(Error::shape(
            "loss_topic",
            format!("logits {r}x{n} vs {} target topics", target.len()),
        ));
    }
    let sum: f64 = target.iter().sum();
    if target.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("topic label is not a distribution (sums to {sum})")));
    }
    let p_hat = tape.constant(Tensor::row_vector(target.iter().map(|&p| T::from_f64(p)).collect()));
    match kind {
        TopicLossKind::L2 => {
            let p = tape.softmax_rows(logits);
            let diff = tape.sub(p, p_hat)?;
            let sq = tape.squared_l2(diff);
            Ok(tape.scale(sq, 0.5))
        }
        TopicLossKind::Kl => {
            let entropy: f64 = target.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
            let log_p = tape.log_softmax_rows(logits);
            let cross = tape.mul(p_hat, log_p)?;
            let cross = tape.sum(cross);
            let c = tape.constant(Tensor::scalar(T::from_f64(entropy)));
            tape.sub(c, cross)
        }
        TopicLossKind::SigmoidCe => {
            // −[p ln σ(z) + (1−p) ln(1−σ(z))] = softplus(z) − p·z
            let sp = tape.softplus(logits);
            let pz = tape.mul(p_hat, logits)?;
            let d = tape.sub(sp, pz)?;
            Ok(tape.sum(d))
        }
    }
}

/// Which objective terms are active, plus masking; the ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossOptions {
    pub in_text: bool,
    pub out_of_text: bool,
    pub topic: bool,
    /// Exclude the gold object's relatives from the out-of-text denominator.
    pub masking: bool,
    pub topic_loss: TopicLossKind,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            in_text: true,
            out_of_text: true,
            topic: true,
            masking: true,
            topic_loss: TopicLossKind::L2,
        }
    }
}

impl LossOptions {
    /// Scores the training loss needs from the forward pass.
    pub fn request(&self) -> ForwardRequest {
        ForwardRequest {
            intext: self.in_text,
            objects: if self.out_of_text { ObjectScoring::WithGold } else { ObjectScoring::None },
            topic: self.topic,
        }
    }
}

/// One dialogue's loss on the tape and its per-term values.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub in_text: f64,
    pub out_of_text: f64,
    pub topic: f64,
}

/// `L_i + L_o + L_tp` for one dialogue: in-text and out-of-text terms summed
/// over its pronouns, the topic term once. A pronoun missing one gold side
/// contributes only the other term.
pub fn dialogue_loss<T: Scalar>(
    tape: &mut Tape<T>,
    fwd: &DialogueForward,
    d: &Dialogue,
    pool: &ObjectPool,
    topic_target: Option<&[f64]>,
    opts: &LossOptions,
) -> Result<LossTerms> {
    let mut terms = Vec::new();
    let (mut li, mut lo, mut ltp) = (0.0, 0.0, 0.0);
    for (k, (pr, out)) in d.pronouns.iter().zip(&fwd.pronouns).enumerate() {
        if opts.in_text && !pr.gold_intext.is_empty() {
            let scores = out.intext.ok_or_else(|| missing(d, k, "in-text"))?;
            let l = loss_in_text(tape, scores, &pr.gold_intext)?;
            li += tape.scalar(l).as_f64();
            terms.push(l);
        }
        if let (true, Some(gold)) = (opts.out_of_text, &pr.gold_object) {
            let scores = out.objects.ok_or_else(|| missing(d, k, "object"))?;
            let g = pool.require(gold)?;
            let mask = if opts.masking { pool.mask_indices(g) } else { BTreeSet::new() };
            let l = loss_out_of_text(tape, scores, g, &mask)?;
            lo += tape.scalar(l).as_f64();
            terms.push(l);
        }
    }
    if opts.topic {
        let target = topic_target
            .ok_or_else(|| Error::Validation(format!("dialogue {}: no topic label", d.id)))?;
        let logits = fwd
            .topic_logits
            .ok_or_else(|| Error::Validation(format!("dialogue {}: topic logits not computed", d.id)))?;
        let l = loss_topic(tape, logits, target, opts.topic_loss)?;
        ltp = tape.scalar(l).as_f64();
        terms.push(l);
    }
    let total = if terms.is_empty() {
        tape.constant(Tensor::scalar(T::zero()))
    } else {
        let all = tape.concat_rows(&terms)?;
        tape.sum(all)
    };
    Ok(LossTerms {
        total,
        in_text: li,
        out_of_text: lo,
        topic: ltp,
    })
}

fn missing(d: &Dialogue, k: usize, what: &str) -> Error {
    Error::Validation(format!("dialogue {} pronoun {k}: {what} scores not computed", d.id))
}
