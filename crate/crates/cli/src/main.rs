mod config;

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use exophora::corpus::{load_dialogues_with_report, load_object_pool, Dialogue, ObjectPool, PronounClass};
use exophora::eval::{evaluate, rank_objects, write_predictions_jsonl, EvalOptions};
use exophora::scorer::{score_dialogue, EmbeddingStore, ForwardRequest, ObjectBank, ObjectScoring};
use exophora::seed::sub_seed;
use exophora::topics::{default_stopwords, fit_lda, lda_preprocess, LdaConfig, TopicModel, Vocabulary};
use exophora::trainer::{topic_labels, train, Checkpoint, EpochControl, TopicLossKind, TrainConfig, TrainData};

use config::{FileConfig, Paths};

/// Bad flags, config keys or ids supplied by the user; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "exophora", version, about = "Train and evaluate in-text and out-of-text pronoun coreference")]
struct Cli {
    /// key = value file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; lda, init and shuffle streams are derived from it. [default: 13]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    paths: PathArgs,
    #[command(subcommand)]
    command: Command,
}

/// Relative paths resolve against the data directory.
#[derive(Args, Debug, Clone, Default)]
pub struct PathArgs {
    /// Root for relative paths. [default: $EXO_DATA_DIR or .]
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// [default: train.jsonl]
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    /// [default: dev.jsonl]
    #[arg(long, global = true)]
    dev: Option<PathBuf>,
    /// [default: test.jsonl]
    #[arg(long, global = true)]
    test: Option<PathBuf>,
    /// Object pool JSON. [default: objects.json]
    #[arg(long, global = true)]
    objects: Option<PathBuf>,
    /// Directory holding manifest.json. [default: embeddings]
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// [default: topic_model.bin]
    #[arg(long, global = true)]
    topic_model: Option<PathBuf>,
    /// [default: checkpoint.bin]
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Directory for reports, tables and logs. [default: out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and cross-check dialogues, object pool and embeddings.
    Validate,
    /// Fit the topic model on the training dialogues.
    Lda(LdaArgs),
    /// Train the scorer and keep the best checkpoint on dev.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Rank the object pool for one pronoun.
    Rank(RankArgs),
}

#[derive(Args, Debug)]
struct LdaArgs {
    /// Number of topics. [default: 40]
    #[arg(long)]
    topics: Option<usize>,
    /// Gibbs sweeps. [default: 1000]
    #[arg(long)]
    sweeps: Option<usize>,
    /// Drop words seen fewer times in training. [default: 5]
    #[arg(long)]
    min_freq: Option<usize>,
    /// Document-topic prior. [default: 50 / topics]
    #[arg(long)]
    alpha: Option<f64>,
    /// Topic-word prior. [default: 0.01]
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate. [default: 2e-4]
    #[arg(long)]
    lr: Option<f64>,
    /// Global gradient-norm clip; 0 disables. [default: 1]
    #[arg(long)]
    clip: Option<f64>,
    /// [default: 20]
    #[arg(long)]
    d_width: Option<usize>,
    /// [default: 200]
    #[arg(long)]
    d_tp: Option<usize>,
    /// [default: 150]
    #[arg(long)]
    hidden: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    topic_hidden: Option<usize>,
    /// l2, kl or sigmoid_ce. [default: l2]
    #[arg(long)]
    topic_loss: Option<String>,
    /// Drop the topic-prediction term.
    #[arg(long)]
    no_topic_loss: bool,
    /// Drop the out-of-text term.
    #[arg(long)]
    no_out_of_text_loss: bool,
    /// Drop the in-text term.
    #[arg(long)]
    no_in_text_loss: bool,
    /// Keep the gold object's relatives in the out-of-text denominator.
    #[arg(long)]
    no_masking: bool,
    /// Score with the local term only.
    #[arg(long)]
    no_global: bool,
    /// Per-epoch JSONL log. [default: <out>/train_log.jsonl]
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// train, dev or test. [default: test]
    #[arg(long)]
    split: Option<String>,
    /// Write per-pronoun rankings as JSONL.
    #[arg(long)]
    dump_predictions: Option<PathBuf>,
    /// Frequent/infrequent boundary in training occurrences. [default: from checkpoint]
    #[arg(long)]
    frequency_threshold: Option<usize>,
}

#[derive(Args, Debug)]
struct RankArgs {
    /// Dialogue id.
    #[arg(long)]
    dialogue: String,
    /// Pronoun index within the dialogue.
    #[arg(long)]
    pronoun: usize,
    /// Split the dialogue is in. [default: test]
    #[arg(long)]
    split: Option<String>,
    /// [default: 10]
    #[arg(long)]
    k: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 usage, 2 data or validation, 3 numeric failure.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<exophora::Error>() {
            return match err {
                exophora::Error::NonFinite(_) => 3,
                exophora::Error::Config(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

struct Ctx {
    cfg: FileConfig,
    paths: Paths,
    seed: u64,
    out: Box<dyn std::io::Write>,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let paths = Paths::resolve(&cfg, &cli.paths)?;
    let seed = cfg.pick("seed", cli.seed, 13)?;
    let mut ctx = Ctx {
        cfg,
        paths,
        seed,
        out: Box::new(std::io::stdout().lock()),
    };
    match cli.command {
        Command::Validate => cmd_validate(&mut ctx),
        Command::Lda(a) => cmd_lda(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Eval(a) => cmd_eval(&mut ctx, a),
        Command::Rank(a) => cmd_rank(&mut ctx, a),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!(exophora::Error::Validation(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn load_split(path: &Path, name: &str) -> Result<Vec<Dialogue>> {
    require_file(path, &format!("{name} dialogues"))?;
    let loaded = load_dialogues_with_report(path)?;
    if loaded.dialogues.is_empty() {
        bail!(exophora::Error::Validation(format!("{name} dialogue file {} is empty", path.display())));
    }
    if loaded.rejected_pronouns > 0 {
        warn!("{name}: skipped {} pronouns with no gold annotation", loaded.rejected_pronouns);
    }
    Ok(loaded.dialogues)
}

fn load_pool(paths: &Paths) -> Result<ObjectPool> {
    require_file(&paths.objects, "object pool")?;
    let (pool, report) = load_object_pool(&paths.objects)?;
    if report.dropped_relatives > 0 || report.dropped_self_references > 0 {
        warn!(
            "object pool: dropped {} relatives outside the pool and {} self references",
            report.dropped_relatives, report.dropped_self_references
        );
    }
    Ok(pool)
}

fn load_store(paths: &Paths) -> Result<EmbeddingStore> {
    require_file(&paths.embeddings, "embedding directory")?;
    Ok(EmbeddingStore::load(&paths.embeddings)?)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_validate(ctx: &mut Ctx) -> Result<()> {
    let pool = load_pool(&ctx.paths)?;
    let store = load_store(&ctx.paths)?;
    let mut report = String::new();
    writeln!(report, "pool: {} categories", pool.len())?;
    writeln!(report, "embeddings: dim {}, {} dialogues, {} objects", store.dim(), store.n_dialogues(), store.n_objects())?;
    for c in pool.categories() {
        store.object(&c.id)?;
    }
    for name in ["train", "dev", "test"] {
        let path = ctx.paths.split(name)?.to_path_buf();
        if name != "train" && !path.exists() {
            writeln!(report, "{name}: absent")?;
            continue;
        }
        let dialogues = load_split(&path, name)?;
        pool.check_gold_objects(&dialogues)?;
        store.check_corpus(&dialogues, &pool)?;
        let mut counts = [0usize; 3];
        for p in dialogues.iter().flat_map(|d| &d.pronouns) {
            counts[match p.class() {
                PronounClass::Discussed => 0,
                PronounClass::NotDiscussed => 1,
                PronounClass::InTextOnly => 2,
            }] += 1;
        }
        writeln!(
            report,
            "{name}: {} dialogues, {} pronouns (discussed {}, not discussed {}, in-text only {})",
            dialogues.len(),
            counts.iter().sum::<usize>(),
            counts[0],
            counts[1],
            counts[2]
        )?;
    }
    write!(ctx.out, "{report}")?;
    Ok(())
}

fn topic_table(model: &TopicModel, k: usize) -> Result<String> {
    let mut s = String::new();
    for t in 0..model.n_topics {
        let words: Vec<String> = model.top_words(t, k)?.into_iter().map(|(w, _)| w).collect();
        writeln!(s, "topic {t:>2}: {}", words.join(" "))?;
    }
    Ok(s)
}

fn cmd_lda(ctx: &mut Ctx, a: LdaArgs) -> Result<()> {
    let train = load_split(&ctx.paths.train, "train")?;
    let defaults = LdaConfig::default();
    let n_topics: usize = ctx.cfg.pick("topics", a.topics, defaults.n_topics)?;
    if n_topics < 2 {
        bail!(UsageError(format!("--topics must be at least 2, got {n_topics}")));
    }
    let config = LdaConfig {
        n_topics,
        alpha: ctx.cfg.pick_opt("alpha", a.alpha)?,
        beta: ctx.cfg.pick("beta", a.beta, defaults.beta)?,
        iterations: ctx.cfg.pick("sweeps", a.sweeps, defaults.iterations)?,
        fold_iters: defaults.fold_iters,
        seed: sub_seed(ctx.seed, "lda"),
    };
    let min_freq = ctx.cfg.pick("min-freq", a.min_freq, 5)?;
    let stop = default_stopwords();
    let vocab = Vocabulary::build(&train, min_freq, &stop);
    if vocab.is_empty() {
        bail!(exophora::Error::Validation(format!(
            "no training word occurs at least {min_freq} times outside the stopword list"
        )));
    }
    let corpus: Vec<Vec<usize>> = train.iter().map(|d| lda_preprocess(d, &vocab, &stop)).collect();
    info!("fitting {n_topics} topics over {} words, {} sweeps", vocab.len(), config.iterations);
    let model = fit_lda(&corpus, vocab, &config)?;
    create_parent(&ctx.paths.topic_model)?;
    model.save(&ctx.paths.topic_model)?;
    let table = topic_table(&model, 5)?;
    write_text(&ctx.paths.out.join("topics.txt"), &table)?;
    write!(ctx.out, "{table}")?;
    Ok(())
}

fn cmd_train(ctx: &mut Ctx, a: TrainArgs) -> Result<()> {
    let cfg = &ctx.cfg;
    let train_set = load_split(&ctx.paths.train, "train")?;
    let dev = if ctx.paths.dev.exists() {
        load_split(&ctx.paths.dev, "dev")?
    } else {
        warn!("no dev split at {}; keeping the last epoch", ctx.paths.dev.display());
        Vec::new()
    };
    let pool = load_pool(&ctx.paths)?.with_train_frequencies(&train_set);
    pool.check_gold_objects(&train_set)?;
    pool.check_gold_objects(&dev)?;
    let store = load_store(&ctx.paths)?;
    store.check_corpus(&train_set, &pool)?;
    store.check_corpus(&dev, &pool)?;
    require_file(&ctx.paths.topic_model, "topic model")?;
    let model = TopicModel::load(&ctx.paths.topic_model)?;

    let mut config = TrainConfig::new(store.dim(), model.n_topics);
    config.seed = ctx.seed;
    config.epochs = cfg.pick("epochs", a.epochs, config.epochs)?;
    config.optimizer.learning_rate = cfg.pick("lr", a.lr, config.optimizer.learning_rate)?;
    let clip: f64 = cfg.pick("clip", a.clip, config.optimizer.clip_norm.unwrap_or(0.0))?;
    config.optimizer.clip_norm = (clip > 0.0).then_some(clip);
    let s = &mut config.scorer;
    s.d_width = cfg.pick("d-width", a.d_width, s.d_width)?;
    s.d_tp = cfg.pick("d-tp", a.d_tp, s.d_tp)?;
    s.hidden = cfg.pick("hidden", a.hidden, s.hidden)?;
    s.topic_hidden = cfg.pick("topic-hidden", a.topic_hidden, s.topic_hidden)?;
    s.use_global = !cfg.switch("no-global", a.no_global)?;
    let l = &mut config.loss;
    l.topic = !cfg.switch("no-topic-loss", a.no_topic_loss)?;
    l.out_of_text = !cfg.switch("no-out-of-text-loss", a.no_out_of_text_loss)?;
    l.in_text = !cfg.switch("no-in-text-loss", a.no_in_text_loss)?;
    l.masking = !cfg.switch("no-masking", a.no_masking)?;
    if let Some(kind) = cfg.pick_opt::<String>("topic-loss", a.topic_loss)? {
        l.topic_loss = kind.parse::<TopicLossKind>()?;
    }
    if [s.d_width, s.d_tp, s.hidden, s.topic_hidden].contains(&0) {
        bail!(UsageError("layer widths must be positive".into()));
    }
    config.validate()?;

    let labels = topic_labels(&model, &train_set, &default_stopwords());
    let data = TrainData {
        train: &train_set,
        dev: &dev,
        store: &store,
        pool: &pool,
        topic_labels: &labels,
    };
    let log_path = match a.log {
        Some(p) => p,
        None => ctx.paths.out.join("train_log.jsonl"),
    };
    create_parent(&log_path)?;
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let outcome = train(&config, &data, |record| {
        let line = serde_json::to_string(record).map_err(|e| exophora::Error::Format(e.to_string()))?;
        writeln!(log, "{line}").map_err(|e| exophora::Error::Format(format!("{}: {e}", log_path.display())))?;
        Ok(EpochControl::Continue)
    })?;
    create_parent(&ctx.paths.checkpoint)?;
    outcome.best.save(&ctx.paths.checkpoint)?;
    let mut s = format!("best epoch {} of {}", outcome.best.epoch, outcome.log.len());
    if let Some(r) = &outcome.best.dev {
        write!(s, ", dev selection {:.4}", r.selection)?;
    }
    writeln!(ctx.out, "{s}\ncheckpoint: {}", ctx.paths.checkpoint.display())?;
    Ok(())
}

fn load_checkpoint(paths: &Paths) -> Result<Checkpoint> {
    require_file(&paths.checkpoint, "checkpoint")?;
    Ok(Checkpoint::load(&paths.checkpoint)?)
}

fn cmd_eval(ctx: &mut Ctx, a: EvalArgs) -> Result<()> {
    let split: String = ctx.cfg.pick("split", a.split, "test".to_string())?;
    let path = ctx.paths.split(&split)?.to_path_buf();
    let ckpt = load_checkpoint(&ctx.paths)?;
    let dialogues = load_split(&path, &split)?;
    let train_set = if split == "train" { dialogues.clone() } else { load_split(&ctx.paths.train, "train")? };
    let pool = load_pool(&ctx.paths)?.with_train_frequencies(&train_set);
    pool.check_gold_objects(&dialogues)?;
    let store = load_store(&ctx.paths)?;
    store.check_corpus(&dialogues, &pool)?;
    check_dim(&store, &ckpt)?;
    let mut opts: EvalOptions = ckpt.config.eval.clone();
    opts.frequency_threshold = ctx.cfg.pick("frequency-threshold", a.frequency_threshold, opts.frequency_threshold)?;
    let bank = ObjectBank::new(&store, &pool)?;
    let eval = evaluate(&ckpt.params, &bank, &store, &pool, &dialogues, &split, &opts)?;
    let table = eval.report.to_table();
    write_text(&ctx.paths.out.join(format!("{split}_metrics.json")), &eval.report.to_json())?;
    write_text(&ctx.paths.out.join(format!("{split}_metrics.txt")), &table)?;
    if let Some(p) = a.dump_predictions {
        create_parent(&p)?;
        write_predictions_jsonl(&p, &eval.predictions)?;
    }
    write!(ctx.out, "{table}")?;
    Ok(())
}

fn check_dim(store: &EmbeddingStore, ckpt: &Checkpoint) -> Result<()> {
    if store.dim() != ckpt.params.config.d_emb {
        bail!(exophora::Error::Validation(format!(
            "embeddings have dim {} but the checkpoint expects {}",
            store.dim(),
            ckpt.params.config.d_emb
        )));
    }
    Ok(())
}

fn cmd_rank(ctx: &mut Ctx, a: RankArgs) -> Result<()> {
    let split: String = ctx.cfg.pick("split", a.split, "test".to_string())?;
    let k: usize = ctx.cfg.pick("k", a.k, 10)?;
    if k == 0 {
        bail!(UsageError("--k must be at least 1".into()));
    }
    let path = ctx.paths.split(&split)?.to_path_buf();
    let ckpt = load_checkpoint(&ctx.paths)?;
    let dialogues = load_split(&path, &split)?;
    let d = dialogues
        .iter()
        .find(|d| d.id == a.dialogue)
        .ok_or_else(|| UsageError(format!("no dialogue {:?} in the {split} split", a.dialogue)))?;
    let pr = d.pronouns.get(a.pronoun).ok_or_else(|| {
        UsageError(format!("dialogue {} has {} pronouns; index {} is out of range", d.id, d.pronouns.len(), a.pronoun))
    })?;
    let pool = load_pool(&ctx.paths)?;
    let store = load_store(&ctx.paths)?;
    store.check_corpus(std::slice::from_ref(d), &pool)?;
    check_dim(&store, &ckpt)?;
    require_file(&ctx.paths.topic_model, "topic model")?;
    let model = TopicModel::load(&ctx.paths.topic_model)?;

    let bank = ObjectBank::new(&store, &pool)?;
    let req = ForwardRequest {
        intext: true,
        objects: ObjectScoring::All,
        topic: false,
    };
    let scores = score_dialogue(&ckpt.params, d, store.dialogue(&d.id)?, &bank, req)?;
    let object_scores = scores.objects[a.pronoun].as_deref().expect("all pronouns scored");
    let ranked = rank_objects(
        exophora::eval::pronoun_id(&d.id, a.pronoun),
        &pool,
        object_scores,
        pr.gold_object.as_deref(),
        true,
    )?;

    let mut s = String::new();
    writeln!(s, "dialogue {} pronoun {}: \"{}\" at {}", d.id, a.pronoun, d.span_text(pr.span), pr.span)?;
    if let Some(g) = &pr.gold_object {
        let masked = pool.mask_set(g)?;
        let gold_rank = ranked.gold_rank.map_or("-".to_string(), |r| r.to_string());
        writeln!(s, "gold object: {g} (rank {gold_rank}; {} relatives masked)", masked.len())?;
    }
    writeln!(s, "top {k} objects:")?;
    for (i, o) in ranked.ranking.iter().take(k).enumerate() {
        let mark = if Some(&o.id) == pr.gold_object.as_ref() { " *" } else { "" };
        writeln!(s, "  {:>3}. {:<24} {:>9.4}{mark}", i + 1, o.id, o.score)?;
    }
    if let Some(intext) = &scores.intext[a.pronoun] {
        if !pr.candidates.is_empty() {
            let gold: BTreeSet<usize> = pr.gold_intext.iter().copied().collect();
            writeln!(s, "in-text candidates (predicted when score > 0):")?;
            for (i, (&c, &v)) in pr.candidates.iter().zip(intext).enumerate() {
                let mark = if gold.contains(&i) { " *" } else { "" };
                writeln!(s, "  {:<24} {:>9.4}{mark}", format!("\"{}\"", d.span_text(c)), v)?;
            }
        }
    }
    let stop: HashSet<String> = default_stopwords();
    let topics = model.infer_dialogue(d, &stop);
    writeln!(s, "top topics:")?;
    for t in topics.ranked().into_iter().take(3) {
        let words: Vec<String> = model.top_words(t, 5)?.into_iter().map(|(w, _)| w).collect();
        writeln!(s, "  topic {t:>2} ({:.3}): {}", topics.probs[t], words.join(" "))?;
    }
    write!(ctx.out, "{s}")?;
    Ok(())
}
