use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainConfig;
use crate::binfmt::Container;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::scorer::{ScorerParams, PARAM_NAMES};

pub const CHECKPOINT_FORMAT: &str = "checkpoint";

/// Trained weights plus the configuration and dev metrics they were saved with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ScorerParams<f32>,
    pub config: TrainConfig,
    /// 1-based epoch after which the weights were taken.
    pub epoch: usize,
    pub dev: Option<MetricsReport>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    epoch: usize,
    dev: Option<MetricsReport>,
}

impl Checkpoint {
    pub fn to_container(&self) -> Container {
        let meta = Meta {
            config: self.config.clone(),
            epoch: self.epoch,
            dev: self.dev.clone(),
        };
        Container {
            format: CHECKPOINT_FORMAT.to_string(),
            meta: serde_json::to_value(meta).expect("checkpoint meta serializes"),
            tensors: self
                .params
                .named()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta: Meta = serde_json::from_value(c.meta.clone())
            .map_err(|e| Error::Format(format!("checkpoint metadata: {e}")))?;
        let tensors = PARAM_NAMES
            .iter()
            .map(|n| c.tensor(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        if c.tensors.len() != PARAM_NAMES.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, expected {}",
                c.tensors.len(),
                PARAM_NAMES.len()
            )));
        }
        let params = ScorerParams::from_tensors(meta.config.scorer.clone(), tensors)?;
        Ok(Checkpoint {
            params,
            config: meta.config,
            epoch: meta.epoch,
            dev: meta.dev,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path, CHECKPOINT_FORMAT)?)
    }
}
