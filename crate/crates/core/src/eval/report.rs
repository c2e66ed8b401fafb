use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{prf1, rank_objects, recall_at_k, select_antecedents, Prf1, RankedPrediction};
use crate::corpus::{Dialogue, ObjectPool, PronounClass, DEFAULT_FREQUENCY_THRESHOLD};
use crate::error::{Error, Result};
use crate::scorer::{score_dialogue, EmbeddingStore, ForwardRequest, ObjectBank, ObjectScoring, ScorerParams};

pub const IN_TEXT_CONVENTION: &str =
    "micro-averaged over (pronoun, candidate) links of pronouns with an in-text antecedent; prediction = F(p,m) > 0";

pub fn default_root_categories() -> Vec<String> {
    ["person", "animal", "vehicle", "food"].map(String::from).to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Remove the gold object's relatives before ranking.
    pub masking: bool,
    /// Gold objects seen fewer times than this in training are infrequent.
    pub frequency_threshold: usize,
    pub root_categories: Vec<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            masking: true,
            frequency_threshold: DEFAULT_FREQUENCY_THRESHOLD,
            root_categories: default_root_categories(),
        }
    }
}

/// What the evaluator needs to know about one pronoun.
#[derive(Clone, Debug, PartialEq)]
pub struct PronounOutcome {
    pub class: PronounClass,
    pub gold_object: Option<usize>,
    pub gold_rank: Option<usize>,
    pub intext_predicted: Option<BTreeSet<usize>>,
    pub intext_gold: BTreeSet<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallAtK {
    pub count: usize,
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
}

impl RecallAtK {
    /// `None` when there are no ranks.
    pub fn from_ranks(ranks: &[usize]) -> Option<Self> {
        if ranks.is_empty() {
            return None;
        }
        let r = |k| recall_at_k(ranks, k).expect("k >= 1");
        Some(RecallAtK {
            count: ranks.len(),
            r1: r(1),
            r5: r(5),
            r10: r(10),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InTextMetrics {
    pub pronouns: usize,
    #[serde(flatten)]
    pub scores: Prf1,
    pub convention: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecall {
    pub root: String,
    /// Pronouns whose gold object is the root or one of its hyponyms.
    pub count: usize,
    pub recall: Option<RecallAtK>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: String,
    pub dialogues: usize,
    pub pronouns: usize,
    pub out_of_text: Option<RecallAtK>,
    pub not_discussed: Option<RecallAtK>,
    pub discussed: Option<RecallAtK>,
    pub in_text: Option<InTextMetrics>,
    pub frequency_threshold: usize,
    /// Not Discussed pronouns split by how often the gold object occurs in training.
    pub frequent: Option<RecallAtK>,
    pub infrequent: Option<RecallAtK>,
    pub categories: Vec<CategoryRecall>,
    /// Mean of out-of-text R@1 and in-text F1 (whichever are present).
    pub selection: f64,
}

/// Aggregates per-pronoun outcomes into a report.
pub fn summarize(
    split: &str,
    dialogues: usize,
    outcomes: &[PronounOutcome],
    pool: &ObjectPool,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let ranks = |f: &dyn Fn(&PronounOutcome) -> bool| -> Vec<usize> {
        outcomes
            .iter()
            .filter(|o| f(o))
            .filter_map(|o| o.gold_rank)
            .collect()
    };
    let out_of_text = RecallAtK::from_ranks(&ranks(&|_| true));
    let not_discussed = RecallAtK::from_ranks(&ranks(&|o| o.class == PronounClass::NotDiscussed));
    let discussed = RecallAtK::from_ranks(&ranks(&|o| o.class == PronounClass::Discussed));

    let infrequent_obj = |o: &PronounOutcome| {
        o.gold_object
            .is_some_and(|g| pool.get(g).train_frequency < opts.frequency_threshold)
    };
    let frequent = RecallAtK::from_ranks(&ranks(&|o| {
        o.class == PronounClass::NotDiscussed && o.gold_object.is_some() && !infrequent_obj(o)
    }));
    let infrequent =
        RecallAtK::from_ranks(&ranks(&|o| o.class == PronounClass::NotDiscussed && infrequent_obj(o)));

    let mut categories = Vec::new();
    for root in &opts.root_categories {
        let closure = match pool.index_of(root) {
            Some(i) => pool.hyponym_closure(i)?,
            None => BTreeSet::new(),
        };
        let r = ranks(&|o| o.gold_object.is_some_and(|g| closure.contains(&g)));
        categories.push(CategoryRecall {
            root: root.clone(),
            count: r.len(),
            recall: RecallAtK::from_ranks(&r),
        });
    }

    let (pred, gold): (Vec<_>, Vec<_>) = outcomes
        .iter()
        .filter(|o| !o.intext_gold.is_empty())
        .filter_map(|o| o.intext_predicted.clone().map(|p| (p, o.intext_gold.clone())))
        .unzip();
    let in_text = if gold.is_empty() {
        None
    } else {
        Some(InTextMetrics {
            pronouns: gold.len(),
            scores: prf1(&pred, &gold)?,
            convention: IN_TEXT_CONVENTION.to_string(),
        })
    };

    let parts: Vec<f64> = out_of_text
        .map(|r| r.r1)
        .into_iter()
        .chain(in_text.as_ref().map(|m| m.scores.f1))
        .collect();
    let selection = if parts.is_empty() {
        0.0
    } else {
        parts.iter().sum::<f64>() / parts.len() as f64
    };

    Ok(MetricsReport {
        split: split.to_string(),
        dialogues,
        pronouns: outcomes.len(),
        out_of_text,
        not_discussed,
        discussed,
        in_text,
        frequency_threshold: opts.frequency_threshold,
        frequent,
        infrequent,
        categories,
        selection,
    })
}

pub fn pronoun_id(dialogue_id: &str, index: usize) -> String {
    format!("{dialogue_id}#{index}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// One entry per pronoun with a gold object, in corpus order.
    pub predictions: Vec<RankedPrediction>,
}

/// Scores every pronoun of `dialogues` and builds the report. Dialogues are
/// scored in parallel and reduced in corpus order.
pub fn evaluate(
    params: &ScorerParams<f32>,
    bank: &ObjectBank,
    store: &EmbeddingStore,
    pool: &ObjectPool,
    dialogues: &[Dialogue],
    split: &str,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let req = ForwardRequest {
        intext: true,
        objects: ObjectScoring::WithGold,
        topic: false,
    };
    let per_dialogue = dialogues
        .par_iter()
        .map(|d| -> Result<Vec<(PronounOutcome, Option<RankedPrediction>)>> {
            let scores = score_dialogue(params, d, store.dialogue(&d.id)?, bank, req)?;
            d.pronouns
                .iter()
                .enumerate()
                .map(|(k, pr)| {
                    let ranked = match (&pr.gold_object, &scores.objects[k]) {
                        (Some(g), Some(s)) => Some(rank_objects(
                            pronoun_id(&d.id, k),
                            pool,
                            s,
                            Some(g),
                            opts.masking,
                        )?),
                        _ => None,
                    };
                    let outcome = PronounOutcome {
                        class: pr.class(),
                        gold_object: pr.gold_object.as_deref().map(|g| pool.require(g)).transpose()?,
                        gold_rank: ranked.as_ref().and_then(|r| r.gold_rank),
                        intext_predicted: scores.intext[k].as_deref().map(select_antecedents),
                        intext_gold: pr.gold_intext.iter().copied().collect(),
                    };
                    Ok((outcome, ranked))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let (outcomes, predictions): (Vec<_>, Vec<_>) = per_dialogue.into_iter().flatten().unzip();
    let report = summarize(split, dialogues.len(), &outcomes, pool, opts)?;
    Ok(Evaluation {
        report,
        predictions: predictions.into_iter().flatten().collect(),
    })
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    pronoun_id: &'a str,
    top10: Vec<(&'a str, f64)>,
    gold: Option<&'a str>,
    gold_rank: Option<usize>,
}

/// One JSON object per line: pronoun id, top-10 ranking, gold and its rank.
pub fn write_predictions_jsonl(path: impl AsRef<Path>, preds: &[RankedPrediction]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in preds {
        let line = PredictionLine {
            pronoun_id: &p.pronoun_id,
            top10: p.ranking.iter().take(10).map(|o| (o.id.as_str(), o.score)).collect(),
            gold: p.gold.as_deref(),
            gold_rank: p.gold_rank,
        };
        out.push_str(&serde_json::to_string(&line).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table: Not Discussed and Discussed R@1/5/10, then in-text P/R/F1.
    pub fn to_table(&self) -> String {
        fn pct(v: Option<f64>) -> String {
            v.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v))
        }
        fn recalls(r: &Option<RecallAtK>) -> [String; 3] {
            [pct(r.map(|r| r.r1)), pct(r.map(|r| r.r5)), pct(r.map(|r| r.r10))]
        }
        let count = |r: &Option<RecallAtK>| r.map_or(0, |r| r.count);
        let mut s = String::new();
        let _ = writeln!(s, "split: {} ({} dialogues, {} pronouns)", self.split, self.dialogues, self.pronouns);
        let _ = writeln!(s, "{:<10}|{:^27}|{:^27}|{:^24}", "", "Out-of-text: Not Discussed", "Out-of-text: Discussed", "In-text");
        let _ = writeln!(
            s,
            "{:<10}|{:>8} {:>8} {:>8} |{:>8} {:>8} {:>8} |{:>7} {:>7} {:>7}",
            "", "R@1", "R@5", "R@10", "R@1", "R@5", "R@10", "P", "R", "F1"
        );
        let nd = recalls(&self.not_discussed);
        let di = recalls(&self.discussed);
        let it = self.in_text.as_ref().map(|m| m.scores);
        let _ = writeln!(
            s,
            "{:<10}|{:>8} {:>8} {:>8} |{:>8} {:>8} {:>8} |{:>7} {:>7} {:>7}",
            "model",
            nd[0],
            nd[1],
            nd[2],
            di[0],
            di[1],
            di[2],
            pct(it.map(|m| m.precision)),
            pct(it.map(|m| m.recall)),
            pct(it.map(|m| m.f1)),
        );
        let _ = writeln!(
            s,
            "{:<10}|{:>26} |{:>26} |{:>23}",
            "count",
            count(&self.not_discussed),
            count(&self.discussed),
            self.in_text.as_ref().map_or(0, |m| m.pronouns)
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "Not Discussed by gold-object training frequency (threshold {}):", self.frequency_threshold);
        for (name, r) in [("infrequent", &self.infrequent), ("frequent", &self.frequent)] {
            let v = recalls(r);
            let _ = writeln!(s, "  {name:<10} R@1 {:>6}  R@5 {:>6}  R@10 {:>6}  n={}", v[0], v[1], v[2], count(r));
        }
        let _ = writeln!(s, "Out-of-text by root category (root or hyponym):");
        for c in &self.categories {
            let v = recalls(&c.recall);
            let _ = writeln!(s, "  {:<10} R@1 {:>6}  R@5 {:>6}  R@10 {:>6}  n={}", c.root, v[0], v[1], v[2], c.count);
        }
        let all = recalls(&self.out_of_text);
        let _ = writeln!(s, "All out-of-text: R@1 {} R@5 {} R@10 {} n={}", all[0], all[1], all[2], count(&self.out_of_text));
        let _ = writeln!(s, "In-text convention: {IN_TEXT_CONVENTION}");
        let _ = writeln!(s, "Selection metric: {:.4}", self.selection);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CategorySpec, PoolSpec};

    fn pool() -> ObjectPool {
        let cat = |id: &str, hypo: &[&str]| CategorySpec {
            id: id.into(),
            name: id.into(),
            hyponyms: hypo.iter().map(|s| s.to_string()).collect(),
            ..CategorySpec::default()
        };
        let spec = PoolSpec {
            categories: vec![cat("person", &["man"]), cat("man", &[]), cat("dog", &[])],
        };
        ObjectPool::from_spec(spec).unwrap().0
    }

    fn outcome(class: PronounClass, gold: Option<usize>, rank: Option<usize>) -> PronounOutcome {
        PronounOutcome {
            class,
            gold_object: gold,
            gold_rank: rank,
            intext_predicted: None,
            intext_gold: BTreeSet::new(),
        }
    }

    #[test]
    fn breakdowns_and_absent_groups() {
        let p = pool();
        let man = p.index_of("man").unwrap();
        let dog = p.index_of("dog").unwrap();
        let outcomes = vec![
            outcome(PronounClass::Discussed, Some(man), Some(1)),
            outcome(PronounClass::Discussed, Some(dog), Some(3)),
        ];
        let r = summarize("dev", 1, &outcomes, &p, &EvalOptions::default()).unwrap();
        assert!(r.not_discussed.is_none());
        assert_eq!(r.discussed.unwrap().r1, 0.5);
        let person = &r.categories[0];
        assert_eq!((person.root.as_str(), person.count), ("person", 1));
        assert_eq!(r.categories[1].count, 0);
        assert!(r.in_text.is_none());
        assert_eq!(r.selection, 0.5);
        assert!(r.to_table().contains("Not Discussed"));
    }

    #[test]
    fn in_text_counts_only_pronouns_with_antecedents() {
        let p = pool();
        let mut a = outcome(PronounClass::InTextOnly, None, None);
        a.intext_predicted = Some([0, 1].into());
        a.intext_gold = [0].into();
        let mut b = outcome(PronounClass::NotDiscussed, Some(0), Some(1));
        b.intext_predicted = Some([0].into());
        let r = summarize("x", 1, &[a, b], &p, &EvalOptions::default()).unwrap();
        let m = r.in_text.unwrap();
        assert_eq!((m.scores.tp, m.scores.fp, m.scores.fn_, m.pronouns), (1, 1, 0, 1));
        assert!((r.selection - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }
}
