//! Scoring heads on a [`Tape`].
//!
//! A pronoun `p` and candidate `d` (an in-text mention or a pool object) get
//! `F(p, d) = F_l(p, d) + F_g(p) + F_g(d)`, where `F_l` compares span
//! representations and `F_g` relates one span to the dialogue topic embedding.

use crate::corpus::{Dialogue, MentionSpan, ObjectPool};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};

use super::params::{width_bucket, BoundParams, ParamId, ScorerConfig, ScorerParams};
use super::store::{DialogueEmbeddings, EmbeddingStore};

/// Two-layer feed-forward head: `W₂·relu(W₁·x + b₁) + b₂`, applied row-wise.
pub fn feed_forward<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    x: Var,
    [w1, b1, w2, b2]: [ParamId; 4],
) -> Result<Var> {
    let h = tape.affine(x, p.var(w1), Some(p.var(b1)))?;
    let h = tape.relu(h);
    tape.affine(h, p.var(w2), Some(p.var(b2)))
}

const ATTENTION: [ParamId; 4] = [ParamId::AttnW1, ParamId::AttnB1, ParamId::AttnW2, ParamId::AttnB2];
const LOCAL: [ParamId; 4] = [ParamId::LocalW1, ParamId::LocalB1, ParamId::LocalW2, ParamId::LocalB2];
const GLOBAL: [ParamId; 4] = [
    ParamId::GlobalW1,
    ParamId::GlobalB1,
    ParamId::GlobalW2,
    ParamId::GlobalB2,
];
const PREDICT: [ParamId; 4] = [ParamId::PredW1, ParamId::PredB1, ParamId::PredW2, ParamId::PredB2];

/// Token matrix of one text on the tape plus its per-token attention logits.
#[derive(Clone, Copy, Debug)]
pub struct TokenContext {
    pub tokens: Var,
    /// `n_tokens × 1` attention logits.
    pub scores: Var,
    pub n_tokens: usize,
}

pub fn token_context<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    tokens: &Tensor<f32>,
) -> Result<TokenContext> {
    let n_tokens = tokens.rows();
    let tokens = tape.constant(tokens.cast());
    let scores = feed_forward(tape, p, tokens, ATTENTION)?;
    Ok(TokenContext {
        tokens,
        scores,
        n_tokens,
    })
}

/// `[x_first, x_last, Σ αₜ xₜ, φ(width)]` with `α = softmax(attention logits)`
/// over the span's tokens. Returns a `1 × span_dim` row.
pub fn span_representation<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    ctx: &TokenContext,
    span: MentionSpan,
) -> Result<Var> {
    if span.start > span.end || span.end >= ctx.n_tokens {
        return Err(Error::shape(
            "span_representation",
            format!("span {span} outside {} tokens", ctx.n_tokens),
        ));
    }
    let rows: Vec<usize> = (span.start..=span.end).collect();
    let first = tape.gather_rows(ctx.tokens, &[span.start])?;
    let last = tape.gather_rows(ctx.tokens, &[span.end])?;
    let inside = tape.gather_rows(ctx.tokens, &rows)?;
    let logits = tape.gather_rows(ctx.scores, &rows)?;
    let logits = tape.reshape(logits, 1, rows.len())?;
    let alpha = tape.softmax_rows(logits);
    let pooled = tape.matmul(alpha, inside)?;
    let width = tape.gather_rows(p.var(ParamId::WidthTable), &[width_bucket(span.len())])?;
    tape.concat_cols(&[first, last, pooled, width])
}

fn check_width<T: Scalar>(tape: &Tape<T>, op: &'static str, v: Var, cols: usize) -> Result<()> {
    let s = tape.shape(v);
    if s[1] != cols {
        return Err(Error::shape(op, format!("width {} (expected {cols})", s[1])));
    }
    Ok(())
}

/// `F_l(p, d) = NN_r([e_p, e_d, e_p ⊙ e_d])` for every row of `e_d`; `n × 1`.
pub fn local_score<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ScorerConfig,
    e_p: Var,
    e_d: Var,
) -> Result<Var> {
    check_width(tape, "local_score", e_p, cfg.span_dim())?;
    check_width(tape, "local_score", e_d, cfg.span_dim())?;
    let n = tape.shape(e_d)[0];
    let rep = tape.repeat_rows(e_p, n)?;
    let had = tape.mul(rep, e_d)?;
    let x = tape.concat_cols(&[rep, e_d, had])?;
    feed_forward(tape, p, x, LOCAL)
}

/// `e_tp = NN_tp(e_D)`, a single affine map to `d_tp`.
pub fn topic_embedding<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ScorerConfig,
    e_dialogue: Var,
) -> Result<Var> {
    check_width(tape, "topic_embedding", e_dialogue, cfg.d_emb)?;
    tape.affine(e_dialogue, p.var(ParamId::TopicW), Some(p.var(ParamId::TopicB)))
}

/// `F_g(s) = NN_g([e_tp, P·e_s, e_tp ⊙ P·e_s])` for every row of `e_s`; `n × 1`.
/// `P` is a learned linear map from span width to `d_tp`.
pub fn global_score<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ScorerConfig,
    e_tp: Var,
    e_s: Var,
) -> Result<Var> {
    check_width(tape, "global_score", e_tp, cfg.d_tp)?;
    check_width(tape, "global_score", e_s, cfg.span_dim())?;
    let n = tape.shape(e_s)[0];
    let aligned = tape.affine(e_s, p.var(ParamId::AlignW), None)?;
    let rep = tape.repeat_rows(e_tp, n)?;
    let had = tape.mul(rep, aligned)?;
    let x = tape.concat_cols(&[rep, aligned, had])?;
    feed_forward(tape, p, x, GLOBAL)
}

/// Pre-softmax topic prediction `NN_p(e_tp)`; `1 × n_topics`.
pub fn topic_logits<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ScorerConfig,
    e_tp: Var,
) -> Result<Var> {
    check_width(tape, "topic_logits", e_tp, cfg.d_tp)?;
    feed_forward(tape, p, e_tp, PREDICT)
}

/// `F_l + F_g(p) + F_g(d)`; `local` and `global_d` are `n × 1`, `global_p` is `1 × 1`.
pub fn combine_scores<T: Scalar>(
    tape: &mut Tape<T>,
    local: Var,
    global_p: Var,
    global_d: Var,
) -> Result<Var> {
    let n = tape.shape(local)[0];
    let gp = tape.repeat_rows(global_p, n)?;
    let s = tape.add(local, gp)?;
    tape.add(s, global_d)
}

/// Object-name token embeddings for the whole pool, stacked in canonical order.
#[derive(Clone, Debug)]
pub struct ObjectBank {
    tokens: Tensor<f32>,
    spans: Vec<MentionSpan>,
}

impl ObjectBank {
    pub fn new(store: &EmbeddingStore, pool: &ObjectPool) -> Result<Self> {
        let mut parts = Vec::with_capacity(pool.len());
        let mut spans = Vec::with_capacity(pool.len());
        let mut offset = 0;
        for c in pool.categories() {
            let m = store.object(&c.id)?;
            spans.push(MentionSpan::new(offset, offset + m.rows() - 1));
            offset += m.rows();
            parts.push(m);
        }
        Ok(ObjectBank {
            tokens: Tensor::stack_rows(&parts)?,
            spans,
        })
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// `n_objects × span_dim` representations, one row per pool category.
    pub fn represent<T: Scalar>(&self, tape: &mut Tape<T>, p: &BoundParams) -> Result<Var> {
        let ctx = token_context(tape, p, &self.tokens)?;
        let rows = self
            .spans
            .iter()
            .map(|&s| span_representation(tape, p, &ctx, s))
            .collect::<Result<Vec<_>>>()?;
        tape.concat_rows(&rows)
    }
}

/// Which pronouns get which score vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardRequest {
    /// Score in-text candidates of pronouns that have any.
    pub intext: bool,
    pub objects: ObjectScoring,
    /// Produce topic-prediction logits.
    pub topic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectScoring {
    None,
    /// Only pronouns with a gold object.
    WithGold,
    All,
}

impl ForwardRequest {
    pub fn everything() -> Self {
        ForwardRequest {
            intext: true,
            objects: ObjectScoring::All,
            topic: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PronounForward {
    /// `F(p, m)` per candidate, `n_candidates × 1`.
    pub intext: Option<Var>,
    /// `F(p, o)` per pool category in canonical order, `n_pool × 1`.
    pub objects: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct DialogueForward {
    pub topic_embedding: Option<Var>,
    pub topic_logits: Option<Var>,
    pub pronouns: Vec<PronounForward>,
}

/// Builds every requested score for one dialogue on `tape`.
pub fn forward_dialogue<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    cfg: &ScorerConfig,
    d: &Dialogue,
    emb: &DialogueEmbeddings,
    bank: &ObjectBank,
    req: ForwardRequest,
) -> Result<DialogueForward> {
    if emb.tokens.rows() != d.tokens.len() {
        return Err(Error::Validation(format!(
            "dialogue {}: {} embedding rows for {} tokens",
            d.id,
            emb.tokens.rows(),
            d.tokens.len()
        )));
    }
    let e_tp = if cfg.use_global || req.topic {
        let e_dialogue = tape.constant(emb.vector.cast());
        Some(topic_embedding(tape, p, cfg, e_dialogue)?)
    } else {
        None
    };
    let topic_logits = match (req.topic, e_tp) {
        (true, Some(e)) => Some(topic_logits(tape, p, cfg, e)?),
        _ => None,
    };
    let global = if cfg.use_global { e_tp } else { None };

    let wants_objects = |has_gold: bool| match req.objects {
        ObjectScoring::None => false,
        ObjectScoring::WithGold => has_gold,
        ObjectScoring::All => true,
    };
    let need_bank = d.pronouns.iter().any(|pr| wants_objects(pr.gold_object.is_some()));
    let need_ctx = need_bank || (req.intext && d.pronouns.iter().any(|pr| !pr.candidates.is_empty()));

    // Pool representations and their topic relevance are shared by all pronouns.
    let objects = if need_bank {
        let reps = bank.represent(tape, p)?;
        let g = match global {
            Some(e) => Some(global_score(tape, p, cfg, e, reps)?),
            None => None,
        };
        Some((reps, g))
    } else {
        None
    };

    let mut pronouns = Vec::with_capacity(d.pronouns.len());
    if !need_ctx {
        pronouns.resize(d.pronouns.len(), PronounForward::default());
        return Ok(DialogueForward {
            topic_embedding: e_tp,
            topic_logits,
            pronouns,
        });
    }
    let ctx = token_context(tape, p, &emb.tokens)?;
    for pr in &d.pronouns {
        let score_intext = req.intext && !pr.candidates.is_empty();
        let score_objects = wants_objects(pr.gold_object.is_some());
        if !score_intext && !score_objects {
            pronouns.push(PronounForward::default());
            continue;
        }
        let e_p = span_representation(tape, p, &ctx, pr.span)?;
        let g_p = match global {
            Some(e) => Some(global_score(tape, p, cfg, e, e_p)?),
            None => None,
        };
        let mut out = PronounForward::default();
        if score_intext {
            let reps = pr
                .candidates
                .iter()
                .map(|&c| span_representation(tape, p, &ctx, c))
                .collect::<Result<Vec<_>>>()?;
            let e_m = tape.concat_rows(&reps)?;
            let local = local_score(tape, p, cfg, e_p, e_m)?;
            out.intext = Some(match (g_p, global) {
                (Some(gp), Some(e)) => {
                    let g_m = global_score(tape, p, cfg, e, e_m)?;
                    combine_scores(tape, local, gp, g_m)?
                }
                _ => local,
            });
        }
        if score_objects {
            let (e_o, g_o) = objects.expect("bank built when any pronoun needs objects");
            let local = local_score(tape, p, cfg, e_p, e_o)?;
            out.objects = Some(match (g_p, g_o) {
                (Some(gp), Some(go)) => combine_scores(tape, local, gp, go)?,
                _ => local,
            });
        }
        pronouns.push(out);
    }
    Ok(DialogueForward {
        topic_embedding: e_tp,
        topic_logits,
        pronouns,
    })
}

/// Plain-number output of [`forward_dialogue`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DialogueScores {
    /// Per pronoun: `F(p, m)` over its candidates, when scored.
    pub intext: Vec<Option<Vec<f64>>>,
    /// Per pronoun: `F(p, o)` over the pool in canonical order, when scored.
    pub objects: Vec<Option<Vec<f64>>>,
    /// Predicted topic distribution `softmax(NN_p(e_tp))`, when requested.
    pub topic_probs: Option<Vec<f64>>,
}

/// Runs the scorer without gradients and reads the scores back.
pub fn score_dialogue<T: Scalar>(
    params: &ScorerParams<T>,
    d: &Dialogue,
    emb: &DialogueEmbeddings,
    bank: &ObjectBank,
    req: ForwardRequest,
) -> Result<DialogueScores> {
    let mut tape = Tape::<T>::new();
    let bound = params.bind(&mut tape, false);
    let fwd = forward_dialogue(&mut tape, &bound, &params.config, d, emb, bank, req)?;
    let read = |tape: &Tape<T>, v: Option<Var>| {
        v.map(|v| tape.value(v).data().iter().map(|x| x.as_f64()).collect::<Vec<f64>>())
    };
    let topic_probs = match fwd.topic_logits {
        Some(z) => {
            let p = tape.softmax_rows(z);
            read(&tape, Some(p))
        }
        None => None,
    };
    let scores = DialogueScores {
        intext: fwd.pronouns.iter().map(|p| read(&tape, p.intext)).collect(),
        objects: fwd.pronouns.iter().map(|p| read(&tape, p.objects)).collect(),
        topic_probs,
    };
    let finite = scores
        .intext
        .iter()
        .chain(&scores.objects)
        .flatten()
        .flatten()
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::NonFinite(format!("dialogue {}: non-finite score", d.id)));
    }
    Ok(scores)
}
