//! `key = value` run configuration; command-line flags override file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};

use crate::UsageError;

pub const DATA_DIR_VAR: &str = "EXO_DATA_DIR";

/// Keys accepted in a config file; each mirrors the long flag of the same name.
pub const KNOWN_KEYS: &[&str] = &[
    "data-dir",
    "train",
    "dev",
    "test",
    "objects",
    "embeddings",
    "topic-model",
    "checkpoint",
    "out",
    "seed",
    "topics",
    "sweeps",
    "min-freq",
    "alpha",
    "beta",
    "epochs",
    "lr",
    "clip",
    "d-width",
    "d-tp",
    "hidden",
    "topic-hidden",
    "topic-loss",
    "no-topic-loss",
    "no-out-of-text-loss",
    "no-in-text-loss",
    "no-masking",
    "no-global",
    "frequency-threshold",
    "split",
    "k",
];

#[derive(Clone, Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let k = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(format!("line {}: unknown key {k:?}", n + 1));
            }
            values.insert(k, v.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    /// `flag` if given on the command line, else the file value, else `default`.
    pub fn pick<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick_opt(key, flag)?.unwrap_or(default))
    }

    pub fn pick_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => match v.parse() {
                Ok(x) => Ok(Some(x)),
                Err(e) => bail!(UsageError(format!("config key {key}: {e}"))),
            },
        }
    }

    /// Boolean switches: a set flag wins, otherwise the file value.
    pub fn switch(&self, key: &str, flag: bool) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        self.pick(key, None, false)
    }
}

/// Resolved input and output locations.
#[derive(Clone, Debug)]
pub struct Paths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub objects: PathBuf,
    pub embeddings: PathBuf,
    pub topic_model: PathBuf,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
}

impl Paths {
    pub fn resolve(cfg: &FileConfig, flags: &crate::PathArgs) -> Result<Self> {
        let env_root = std::env::var_os(DATA_DIR_VAR).map(PathBuf::from);
        let root: PathBuf = cfg.pick("data-dir", flags.data_dir.clone(), env_root.unwrap_or_else(|| PathBuf::from(".")))?;
        let at = |key: &str, flag: &Option<PathBuf>, name: &str| -> Result<PathBuf> {
            let p: PathBuf = cfg.pick(key, flag.clone(), PathBuf::from(name))?;
            Ok(if p.is_absolute() { p } else { root.join(p) })
        };
        Ok(Paths {
            train: at("train", &flags.train, "train.jsonl")?,
            dev: at("dev", &flags.dev, "dev.jsonl")?,
            test: at("test", &flags.test, "test.jsonl")?,
            objects: at("objects", &flags.objects, "objects.json")?,
            embeddings: at("embeddings", &flags.embeddings, "embeddings")?,
            topic_model: at("topic-model", &flags.topic_model, "topic_model.bin")?,
            checkpoint: at("checkpoint", &flags.checkpoint, "checkpoint.bin")?,
            out: at("out", &flags.out, "out")?,
        })
    }

    pub fn split(&self, name: &str) -> Result<&Path> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            _ => bail!(UsageError(format!("unknown split {name:?} (train, dev, test)"))),
        }
    }
}
