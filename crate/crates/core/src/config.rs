//! Flat TOML experiment files.
//!
//! ```toml
//! dataset = "umls"
//! model = "spikte"
//! dim = 32
//! learning_rate = 0.01
//! batch_size = 100
//! num_negatives = 10
//! tau_ref = 0.03
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::neuron::NeuronConfig;
use crate::scoring::ScoreKind;
use crate::spiketrain::NormMode;
use crate::train::{LossKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin dataset name or a directory with `train.txt`/`valid.txt`/`test.txt`.
    pub dataset: String,
    pub model: ModelKind,
    /// Artifact directory; relative paths resolve against the working directory.
    pub output: Option<String>,
    pub seed: u64,

    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub num_negatives: usize,
    pub margin: f64,
    pub l2: f64,
    pub tau_ref: f64,
    pub loss: LossKind,
    pub norm_mode: NormMode,
    pub score: ScoreKind,
    pub max_epochs: usize,
    pub patience: usize,
    pub freeze_relations: Vec<String>,

    // integrate-and-fire models
    pub input_size: usize,
    pub u_th: f64,
    pub tau_s: f64,
    pub window: f64,
    pub weight_mean: f64,
    pub weight_std: f64,
    pub delta: f64,

    // sweep-length
    pub sweep_stds: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dataset: String::new(),
            model: ModelKind::Spikte,
            output: None,
            seed: t.seed,
            dim: t.dim,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            num_negatives: t.num_negatives,
            margin: t.margin,
            l2: t.l2,
            tau_ref: t.tau_ref,
            loss: t.loss,
            norm_mode: t.norm_mode,
            score: t.score,
            max_epochs: t.max_epochs,
            patience: t.patience,
            freeze_relations: t.freeze_relations,
            input_size: t.neuron.input_size,
            u_th: t.neuron.u_th,
            tau_s: t.neuron.tau_s,
            window: t.neuron.window,
            weight_mean: t.weight_mean,
            weight_std: t.weight_std,
            delta: t.spike_reg,
            sweep_stds: vec![0.0, 1.0, 2.0, 4.0, 8.0],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_owned();
            let key = unknown_key(&msg).unwrap_or_else(|| "config".to_owned());
            Error::config(key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Every key written out, suitable for reloading.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_empty() {
            return Err(Error::config("dataset", "missing"));
        }
        if self.sweep_stds.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::config("sweep_stds", "standard deviations must be >= 0"));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            num_negatives: self.num_negatives,
            margin: self.margin,
            l2: self.l2,
            tau_ref: self.tau_ref,
            loss: self.loss,
            norm_mode: self.norm_mode,
            score: self.score,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            freeze_relations: self.freeze_relations.clone(),
            neuron: NeuronConfig {
                u_th: self.u_th,
                tau_s: self.tau_s,
                tau_ref: self.tau_ref,
                window: self.window,
                input_size: self.input_size,
            },
            weight_mean: self.weight_mean,
            weight_std: self.weight_std,
            spike_reg: self.delta,
        }
    }
}

// "unknown field `foo`, expected one of ..."
fn unknown_key(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_owned())
}
