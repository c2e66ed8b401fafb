use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::ObjectPool;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedObject {
    pub id: String,
    pub score: f64,
}

/// Pool objects ranked for one pronoun, with the gold object's relatives removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub pronoun_id: String,
    pub ranking: Vec<RankedObject>,
    pub gold: Option<String>,
    /// 1-based position of the gold object in `ranking`.
    pub gold_rank: Option<usize>,
}

impl RankedPrediction {
    /// Objects scored above zero, in rank order.
    pub fn predicted(&self) -> impl Iterator<Item = &RankedObject> {
        self.ranking.iter().take_while(|o| o.score > 0.0)
    }
}

/// Sorts `scores` (one per pool category, canonical order) descending; ties
/// keep canonical order. Indices in `mask` are dropped.
pub fn rank_indices(scores: &[f64], mask: &BTreeSet<usize>) -> Result<Vec<usize>> {
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("object score {i} is NaN")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).filter(|i| !mask.contains(i)).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(idx)
}

/// Ranks the pool for one pronoun. With a gold object and `masking`, the
/// gold's synonyms, hypernyms and hyponyms are removed first.
pub fn rank_objects(
    pronoun_id: impl Into<String>,
    pool: &ObjectPool,
    scores: &[f64],
    gold: Option<&str>,
    masking: bool,
) -> Result<RankedPrediction> {
    if scores.len() != pool.len() {
        return Err(Error::shape(
            "rank_objects",
            format!("{} scores for a pool of {}", scores.len(), pool.len()),
        ));
    }
    let gold_idx = gold.map(|g| pool.require(g)).transpose()?;
    let mask = match (gold_idx, masking) {
        (Some(g), true) => pool.mask_indices(g),
        _ => BTreeSet::new(),
    };
    let order = rank_indices(scores, &mask)?;
    let gold_rank = gold_idx.and_then(|g| order.iter().position(|&i| i == g).map(|r| r + 1));
    Ok(RankedPrediction {
        pronoun_id: pronoun_id.into(),
        ranking: order
            .into_iter()
            .map(|i| RankedObject {
                id: pool.get(i).id.clone(),
                score: scores[i],
            })
            .collect(),
        gold: gold.map(str::to_string),
        gold_rank,
    })
}

/// Fraction of gold ranks at or above `k`. Empty input gives 0.
pub fn recall_at_k(gold_ranks: &[usize], k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Config("recall@k needs k >= 1".into()));
    }
    if gold_ranks.is_empty() {
        return Ok(0.0);
    }
    let hits = gold_ranks.iter().filter(|&&r| r >= 1 && r <= k).count();
    Ok(hits as f64 / gold_ranks.len() as f64)
}

/// Candidates with a positive score are predicted antecedents.
pub fn select_antecedents(scores: &[f64]) -> BTreeSet<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Prf1 {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf1 {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Micro-averaged precision, recall and F1 over (pronoun, candidate) links.
pub fn prf1(predicted: &[BTreeSet<usize>], gold: &[BTreeSet<usize>]) -> Result<Prf1> {
    if predicted.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} predicted sets for {} gold sets",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in predicted.iter().zip(gold) {
        let hit = p.intersection(g).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    Ok(Prf1::from_counts(tp, fp, fn_))
}
