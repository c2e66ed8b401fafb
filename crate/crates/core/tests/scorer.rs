use exophora::corpus::{CategorySpec, Dialogue, MentionSpan, ObjectPool, PoolSpec, PronounInstance};
use exophora::numerics::{Tape, Tensor};
use exophora::scorer::{
    forward_dialogue, local_score, span_representation, token_context, width_bucket,
    DialogueEmbeddings, EmbeddingStore, ForwardRequest, ObjectBank, ParamId, ScorerConfig,
    ScorerParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> ScorerConfig {
    ScorerConfig {
        d_emb: 6,
        d_width: 4,
        d_tp: 5,
        hidden: 7,
        topic_hidden: 9,
        n_topics: 3,
        use_global: true,
    }
}

/// Random weights everywhere, biases included.
fn random_params(cfg: &ScorerConfig, seed: u64, scale: f64) -> ScorerParams<f64> {
    let mut p = ScorerParams::<f64>::init(cfg.clone(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
    p
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

fn dialogue(n_tokens: usize, pronouns: Vec<PronounInstance>) -> Dialogue {
    Dialogue {
        id: "d0".into(),
        turns: vec!["x".into()],
        tokens: (0..n_tokens).map(|i| format!("t{i}")).collect(),
        turn_starts: vec![0],
        pronouns,
    }
}

fn pronoun(span: (usize, usize), candidates: &[(usize, usize)], gold: Option<&str>) -> PronounInstance {
    PronounInstance {
        span: MentionSpan::new(span.0, span.1),
        candidates: candidates.iter().map(|&(s, e)| MentionSpan::new(s, e)).collect(),
        gold_intext: if candidates.is_empty() { vec![] } else { vec![0] },
        gold_object: gold.map(str::to_string),
    }
}

fn pool(ids: &[&str]) -> ObjectPool {
    let spec = PoolSpec {
        categories: ids
            .iter()
            .map(|id| CategorySpec {
                id: id.to_string(),
                name: id.to_string(),
                ..CategorySpec::default()
            })
            .collect(),
    };
    ObjectPool::from_spec(spec).unwrap().0
}

// ---- independent plain-vector oracle -------------------------------------

fn affine(x: &[f64], w: &Tensor<f64>, b: Option<&Tensor<f64>>) -> Vec<f64> {
    (0..w.rows())
        .map(|o| {
            let dot: f64 = w.row(o).iter().zip(x).map(|(a, b)| a * b).sum();
            dot + b.map_or(0.0, |b| b.row(0)[o])
        })
        .collect()
}

fn ffn(p: &ScorerParams<f64>, x: &[f64], ids: [ParamId; 4]) -> Vec<f64> {
    let h: Vec<f64> = affine(x, &p[ids[0]], Some(&p[ids[1]])).into_iter().map(|v| v.max(0.0)).collect();
    affine(&h, &p[ids[2]], Some(&p[ids[3]]))
}

fn oracle_span(p: &ScorerParams<f64>, tokens: &[Vec<f64>], s: MentionSpan) -> Vec<f64> {
    let att = [ParamId::AttnW1, ParamId::AttnB1, ParamId::AttnW2, ParamId::AttnB2];
    let scores: Vec<f64> = (s.start..=s.end).map(|t| ffn(p, &tokens[t], att)[0]).collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|v| (v - m).exp()).sum();
    let d = tokens[0].len();
    let mut pooled = vec![0.0; d];
    for (k, t) in (s.start..=s.end).enumerate() {
        let a = (scores[k] - m).exp() / z;
        for j in 0..d {
            pooled[j] += a * tokens[t][j];
        }
    }
    let mut out = tokens[s.start].clone();
    out.extend(&tokens[s.end]);
    out.extend(pooled);
    out.extend(p[ParamId::WidthTable].row(width_bucket(s.len())));
    out
}

fn oracle_local(p: &ScorerParams<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    x.extend(b);
    x.extend(a.iter().zip(b).map(|(u, v)| u * v));
    ffn(p, &x, [ParamId::LocalW1, ParamId::LocalB1, ParamId::LocalW2, ParamId::LocalB2])[0]
}

fn oracle_global(p: &ScorerParams<f64>, e_tp: &[f64], s: &[f64]) -> f64 {
    let ps = affine(s, &p[ParamId::AlignW], None);
    let mut x = e_tp.to_vec();
    x.extend(&ps);
    x.extend(e_tp.iter().zip(&ps).map(|(u, v)| u * v));
    ffn(p, &x, [ParamId::GlobalW1, ParamId::GlobalB1, ParamId::GlobalW2, ParamId::GlobalB2])[0]
}

fn rows_f64(m: &Tensor<f32>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|&v| v as f64).collect()).collect()
}

// ---- fixtures ---------------------------------------------------------------

struct Fixture {
    cfg: ScorerConfig,
    params: ScorerParams<f64>,
    dialogue: Dialogue,
    emb: DialogueEmbeddings,
    pool: ObjectPool,
    store: EmbeddingStore,
}

fn fixture(seed: u64) -> Fixture {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let d = dialogue(
        12,
        vec![
            pronoun((5, 5), &[(0, 1), (2, 4)], Some("cup")),
            pronoun((10, 11), &[(7, 9)], None),
            pronoun((6, 6), &[], Some("dog")),
        ],
    );
    let emb = DialogueEmbeddings {
        tokens: random_matrix(12, cfg.d_emb, &mut rng),
        vector: random_matrix(1, cfg.d_emb, &mut rng),
    };
    let pool = pool(&["cup", "dog", "red car"]);
    let mut store = EmbeddingStore::new(cfg.d_emb);
    store.insert_dialogue("d0", emb.clone()).unwrap();
    for (id, n) in [("cup", 1), ("dog", 1), ("red car", 2)] {
        store.insert_object(id, random_matrix(n, cfg.d_emb, &mut rng)).unwrap();
    }
    Fixture {
        params: random_params(&cfg, seed, 0.5),
        cfg,
        dialogue: d,
        emb,
        pool,
        store,
    }
}

/// `(in-text scores, object scores)` per pronoun from the tape implementation.
fn tape_scores(f: &Fixture, params: &ScorerParams<f64>, cfg: &ScorerConfig) -> Vec<(Vec<f64>, Vec<f64>)> {
    let bank = ObjectBank::new(&f.store, &f.pool).unwrap();
    let mut tape = Tape::<f64>::new();
    let mut params = params.clone();
    params.config = cfg.clone();
    let bound = params.bind(&mut tape, false);
    let out = forward_dialogue(&mut tape, &bound, cfg, &f.dialogue, &f.emb, &bank, ForwardRequest::everything()).unwrap();
    out.pronouns
        .iter()
        .map(|p| {
            let get = |v: Option<exophora::numerics::Var>| v.map(|v| tape.value(v).data().to_vec()).unwrap_or_default();
            (get(p.intext), get(p.objects))
        })
        .collect()
}

fn oracle_scores(f: &Fixture, use_global: bool) -> Vec<(Vec<f64>, Vec<f64>)> {
    let p = &f.params;
    let tokens = rows_f64(&f.emb.tokens);
    let e_d: Vec<f64> = f.emb.vector.row(0).iter().map(|&v| v as f64).collect();
    let e_tp = affine(&e_d, &p[ParamId::TopicW], Some(&p[ParamId::TopicB]));
    let g = |s: &[f64]| if use_global { oracle_global(p, &e_tp, s) } else { 0.0 };
    let objects: Vec<Vec<f64>> = f
        .pool
        .categories()
        .iter()
        .map(|c| {
            let m = rows_f64(f.store.object(&c.id).unwrap());
            oracle_span(p, &m, MentionSpan::new(0, m.len() - 1))
        })
        .collect();
    f.dialogue
        .pronouns
        .iter()
        .map(|pr| {
            let e_p = oracle_span(p, &tokens, pr.span);
            let intext = pr
                .candidates
                .iter()
                .map(|&c| {
                    let e_m = oracle_span(p, &tokens, c);
                    oracle_local(p, &e_p, &e_m) + g(&e_p) + g(&e_m)
                })
                .collect();
            let objs = objects.iter().map(|e_o| oracle_local(p, &e_p, e_o) + g(&e_p) + g(e_o)).collect();
            (intext, objs)
        })
        .collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        let rel = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
        assert!(rel <= tol, "{x} vs {y}");
    }
}

// ---- tests ------------------------------------------------------------------

#[test]
fn forward_matches_plain_oracle() {
    for seed in 0..5 {
        let f = fixture(seed);
        for use_global in [true, false] {
            let mut cfg = f.cfg.clone();
            cfg.use_global = use_global;
            let got = tape_scores(&f, &f.params, &cfg);
            let want = oracle_scores(&f, use_global);
            for ((gi, go), (wi, wo)) in got.iter().zip(&want) {
                assert_close(gi, wi, 1e-6);
                assert_close(go, wo, 1e-6);
            }
        }
    }
}

#[test]
fn total_score_is_local_plus_both_global_terms() {
    let f = fixture(7);
    let mut local_cfg = f.cfg.clone();
    local_cfg.use_global = false;
    let full = tape_scores(&f, &f.params, &f.cfg);
    let local = tape_scores(&f, &f.params, &local_cfg);

    let p = &f.params;
    let tokens = rows_f64(&f.emb.tokens);
    let e_d: Vec<f64> = f.emb.vector.row(0).iter().map(|&v| v as f64).collect();
    let e_tp = affine(&e_d, &p[ParamId::TopicW], Some(&p[ParamId::TopicB]));
    for (k, pr) in f.dialogue.pronouns.iter().enumerate() {
        let gp = oracle_global(p, &e_tp, &oracle_span(p, &tokens, pr.span));
        for (j, &c) in pr.candidates.iter().enumerate() {
            let gm = oracle_global(p, &e_tp, &oracle_span(p, &tokens, c));
            let diff = full[k].0[j] - local[k].0[j] - gp - gm;
            assert!(diff.abs() < 1e-12, "pronoun {k} candidate {j}: {diff}");
        }
    }
}

#[test]
fn single_token_span_repeats_the_token() {
    let cfg = small_config();
    let p = random_params(&cfg, 1, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tokens = random_matrix(4, cfg.d_emb, &mut rng);
    let mut tape = Tape::<f64>::new();
    let b = p.bind(&mut tape, false);
    let ctx = token_context(&mut tape, &b, &tokens).unwrap();
    let e = span_representation(&mut tape, &b, &ctx, MentionSpan::new(2, 2)).unwrap();
    let v = tape.value(e).data().to_vec();
    let x: Vec<f64> = tokens.row(2).iter().map(|&t| t as f64).collect();
    let d = cfg.d_emb;
    assert_close(&v[0..d], &x, 1e-12);
    assert_close(&v[d..2 * d], &x, 1e-12);
    assert_close(&v[2 * d..3 * d], &x, 1e-12);
    assert_close(&v[3 * d..], p[ParamId::WidthTable].row(0), 0.0);
}

#[test]
fn equal_attention_scores_pool_to_the_mean() {
    let cfg = small_config();
    let mut p = random_params(&cfg, 2, 0.5);
    p[ParamId::AttnW2].fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tokens = random_matrix(5, cfg.d_emb, &mut rng);
    let mut tape = Tape::<f64>::new();
    let b = p.bind(&mut tape, false);
    let ctx = token_context(&mut tape, &b, &tokens).unwrap();
    let e = span_representation(&mut tape, &b, &ctx, MentionSpan::new(1, 3)).unwrap();
    let v = tape.value(e).data().to_vec();
    let d = cfg.d_emb;
    let mean: Vec<f64> = (0..d).map(|j| (1..=3).map(|t| tokens.row(t)[j] as f64).sum::<f64>() / 3.0).collect();
    assert_close(&v[2 * d..3 * d], &mean, 1e-12);
    assert_close(&v[3 * d..], p[ParamId::WidthTable].row(2), 0.0);
}

#[test]
fn attention_weights_follow_softmax_of_scores() {
    // Scores [ln 2, 0, 0] give weights [1/2, 1/4, 1/4].
    let cfg = small_config();
    let mut p = ScorerParams::<f64>::zeros(cfg.clone());
    p[ParamId::AttnW1].data_mut()[0] = 1.0;
    p[ParamId::AttnW2].data_mut()[0] = 1.0;
    let d = cfg.d_emb;
    let mut data = vec![0.0f32; 3 * d];
    data[0] = std::f32::consts::LN_2;
    for t in 0..3 {
        data[t * d + 1] = (t + 1) as f32;
    }
    let tokens = Tensor::from_vec(3, d, data).unwrap();
    let mut tape = Tape::<f64>::new();
    let b = p.bind(&mut tape, false);
    let ctx = token_context(&mut tape, &b, &tokens).unwrap();
    let e = span_representation(&mut tape, &b, &ctx, MentionSpan::new(0, 2)).unwrap();
    let v = tape.value(e).data();
    let ln2 = std::f32::consts::LN_2 as f64;
    assert!((v[2 * d] - 0.5 * ln2).abs() < 1e-7);
    assert!((v[2 * d + 1] - (0.5 + 0.25 * 2.0 + 0.25 * 3.0)).abs() < 1e-7);
}

#[test]
fn local_score_special_weights() {
    let cfg = small_config();
    let s = cfg.span_dim();
    let ones = Tensor::<f64>::from_vec(1, s, vec![1.0; s]).unwrap();

    // All-zero head scores zero.
    let p = ScorerParams::<f64>::zeros(cfg.clone());
    let mut tape = Tape::new();
    let b = p.bind(&mut tape, false);
    let a = tape.constant(ones.clone());
    let c = tape.constant(ones.clone());
    let f = local_score(&mut tape, &b, &cfg, a, c).unwrap();
    assert_eq!(tape.scalar(f), 0.0);

    // A head that sums the element-wise product scores span_dim on all-ones.
    let mut p = ScorerParams::<f64>::zeros(cfg.clone());
    for j in 0..s {
        p[ParamId::LocalW1].row_mut(0)[2 * s + j] = 1.0;
    }
    p[ParamId::LocalW2].data_mut()[0] = 1.0;
    let mut tape = Tape::new();
    let b = p.bind(&mut tape, false);
    let a = tape.constant(ones.clone());
    let c = tape.constant(ones);
    let f = local_score(&mut tape, &b, &cfg, a, c).unwrap();
    assert_eq!(tape.scalar(f), s as f64);
}

#[test]
fn local_score_is_not_symmetric() {
    let cfg = small_config();
    let p = random_params(&cfg, 9, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = cfg.span_dim();
    let x: Tensor<f64> = random_matrix(1, s, &mut rng).cast();
    let y: Tensor<f64> = random_matrix(1, s, &mut rng).cast();
    let mut tape = Tape::new();
    let b = p.bind(&mut tape, false);
    let (xv, yv) = (tape.constant(x), tape.constant(y));
    let f1 = local_score(&mut tape, &b, &cfg, xv, yv).unwrap();
    let f2 = local_score(&mut tape, &b, &cfg, yv, xv).unwrap();
    assert!((tape.scalar(f1) - tape.scalar(f2)).abs() > 1e-6);
}

#[test]
fn topic_embedding_is_a_linear_map_of_the_dialogue_vector() {
    let cfg = small_config();
    let mut p = ScorerParams::<f64>::zeros(cfg.clone());
    for k in 0..cfg.d_tp.min(cfg.d_emb) {
        p[ParamId::TopicW].row_mut(k)[k] = 1.0;
    }
    let e_d = Tensor::<f64>::from_vec(1, cfg.d_emb, (0..cfg.d_emb).map(|i| i as f64 - 2.5).collect()).unwrap();
    let mut tape = Tape::new();
    let b = p.bind(&mut tape, false);
    let v = tape.constant(e_d.clone());
    let e = exophora::scorer::topic_embedding(&mut tape, &b, &cfg, v).unwrap();
    assert_eq!(tape.value(e).data(), &e_d.data()[..cfg.d_tp]);
}

#[test]
fn scores_ignore_tokens_outside_the_spans() {
    let f = fixture(3);
    let before = tape_scores(&f, &f.params, &f.cfg);
    let mut g = fixture(3);
    // Without the third pronoun, token 6 lies outside every scored span.
    g.dialogue.pronouns.truncate(2);
    let mut f2 = fixture(3);
    f2.dialogue.pronouns.truncate(2);
    let base = tape_scores(&f2, &f2.params, &f2.cfg);
    for v in g.emb.tokens.row_mut(6) {
        *v += 3.0;
    }
    let after = tape_scores(&g, &g.params, &g.cfg);
    assert_close(&base[0].0, &after[0].0, 1e-12);
    assert_close(&base[1].0, &after[1].0, 1e-12);
    assert_close(&base[0].1, &after[0].1, 1e-12);
    assert_eq!(before[0], base[0]);
}

#[test]
fn scores_are_invariant_to_shifting_the_dialogue() {
    let f = fixture(4);
    let before = tape_scores(&f, &f.params, &f.cfg);
    let mut g = fixture(4);
    let shift = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let prefix = random_matrix(shift, g.cfg.d_emb, &mut rng);
    g.emb.tokens = Tensor::stack_rows(&[&prefix, &g.emb.tokens]).unwrap();
    g.dialogue = dialogue(12 + shift, g.dialogue.pronouns.clone());
    for pr in &mut g.dialogue.pronouns {
        pr.span = MentionSpan::new(pr.span.start + shift, pr.span.end + shift);
        for c in &mut pr.candidates {
            *c = MentionSpan::new(c.start + shift, c.end + shift);
        }
    }
    let after = tape_scores(&g, &g.params, &g.cfg);
    for (b, a) in before.iter().zip(&after) {
        assert_close(&b.0, &a.0, 1e-12);
        assert_close(&b.1, &a.1, 1e-12);
    }
}

#[test]
fn missing_object_embedding_names_the_category() {
    let f = fixture(0);
    let mut store = EmbeddingStore::new(f.cfg.d_emb);
    store.insert_object("cup", Tensor::zeros(1, f.cfg.d_emb)).unwrap();
    let err = ObjectBank::new(&store, &f.pool).unwrap_err().to_string();
    assert!(err.contains("dog"), "{err}");
}

#[test]
fn out_of_range_span_is_a_shape_error() {
    let cfg = small_config();
    let p = ScorerParams::<f64>::zeros(cfg.clone());
    let mut tape = Tape::<f64>::new();
    let b = p.bind(&mut tape, false);
    let ctx = token_context(&mut tape, &b, &Tensor::zeros(3, cfg.d_emb)).unwrap();
    let err = span_representation(&mut tape, &b, &ctx, MentionSpan::new(2, 3)).unwrap_err();
    assert!(err.to_string().contains("[2, 3]"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scores_are_finite_for_bounded_inputs(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let mut f = fixture(seed);
        f.params = random_params(&f.cfg, seed, scale);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in f.emb.tokens.data_mut() {
            *v = rng.gen_range(-10.0f32..10.0);
        }
        for (i, o) in tape_scores(&f, &f.params, &f.cfg).iter().enumerate() {
            prop_assert!(o.0.iter().chain(&o.1).all(|v| v.is_finite()), "pronoun {}", i);
        }
    }
}
