use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::distill::{Mode, Strategy, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Activation, AggregatorConfig, AggregatorKind, EncoderConfig, ModelConfig};

/// Encoder and aggregator shape shared by every model built from a spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSpec {
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    /// Used only in sequential mode.
    pub aggregator: AggregatorKind,
}

impl Default for NetSpec {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32],
            embedding_dim: 16,
            aggregator: AggregatorKind::RecurrentAttention,
        }
    }
}

impl NetSpec {
    pub fn model_config(&self, input_dim: usize, num_classes: usize, mode: Mode) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                input_dim,
                hidden_dims: self.hidden_dims.clone(),
                embedding_dim: self.embedding_dim,
                activation: Activation::Relu,
            },
            aggregator: (mode == Mode::Sequential).then(|| AggregatorConfig {
                kind: self.aggregator,
                state_dim: self.embedding_dim,
            }),
            num_classes,
            decoder: None,
        }
    }

    fn validate(&self, section: &str) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::config(format!("{section}.hidden_dims"), "must not be empty"));
        }
        if let Some(i) = self.hidden_dims.iter().position(|&d| d == 0) {
            return Err(Error::config(format!("{section}.hidden_dims[{i}]"), "must be positive"));
        }
        if self.embedding_dim == 0 {
            return Err(Error::config(format!("{section}.embedding_dim"), "must be positive"));
        }
        Ok(())
    }
}

/// One experiment matrix: a dataset, two architectures, and the
/// strategies × alphas × seeds to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub dataset: DatasetSpec,
    pub teacher: NetSpec,
    pub student: NetSpec,
    pub strategies: Vec<Strategy>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Architecture for strategies that work in either mode.
    pub baseline_mode: Mode,
    pub train: TrainConfig,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            teacher: NetSpec::default(),
            student: NetSpec::default(),
            strategies: Strategy::ALL.to_vec(),
            alphas: (0..10).map(|i| i as f64 / 10.0).collect(),
            seeds: (0..5).collect(),
            baseline_mode: Mode::Sequential,
            train: TrainConfig::default(),
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.teacher.validate("teacher")?;
        self.student.validate("student")?;
        self.train.validate()?;
        if self.strategies.is_empty() {
            return Err(Error::config("strategies", "must not be empty"));
        }
        if self.strategies.iter().collect::<BTreeSet<_>>().len() != self.strategies.len() {
            return Err(Error::config("strategies", "contains duplicates"));
        }
        if self.alphas.is_empty() {
            return Err(Error::config("alphas", "must not be empty"));
        }
        for (i, a) in self.alphas.iter().enumerate() {
            if !(0.0..=1.0).contains(a) {
                return Err(Error::config(format!("alphas[{i}]"), format!("alpha {a} outside [0, 1]")));
            }
            if self.alphas[..i].contains(a) {
                return Err(Error::config(format!("alphas[{i}]"), format!("duplicate alpha {a}")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::config("seeds", "contains duplicates"));
        }
        let embeds = self.strategies.iter().any(|s| {
            matches!(s, Strategy::NonseqEmbed | Strategy::SeqEncoder | Strategy::SeqAggregator)
        });
        if embeds && self.teacher.embedding_dim != self.student.embedding_dim {
            return Err(Error::config(
                "student.embedding_dim",
                "must equal teacher.embedding_dim for embedding-matching strategies",
            ));
        }
        Ok(())
    }

    /// Student architecture used for `strategy`.
    pub fn mode_for(&self, strategy: Strategy) -> Mode {
        strategy.required_mode().unwrap_or(self.baseline_mode)
    }

    pub fn teacher_config(&self, mode: Mode) -> ModelConfig {
        self.teacher
            .model_config(self.dataset.privileged_dim, self.dataset.num_classes, mode)
    }

    pub fn student_config(&self, mode: Mode) -> ModelConfig {
        let input = match mode {
            Mode::Sequential => self.dataset.primary_dim,
            Mode::NonSequential => self.dataset.primary_dim * self.dataset.segments,
        };
        self.student.model_config(input, self.dataset.num_classes, mode)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::contract(format!("cannot serialize run spec: {e}")))
    }
}

/// Parse and validate a run spec from TOML text. Errors carry the dotted key
/// path of the offending field.
pub fn parse_run_spec_str(text: &str) -> Result<RunSpec> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.message()))?;
    let spec: RunSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<document>".to_string() } else { path };
        Error::config(key, e.inner().message())
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_run_spec(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run_spec_str(&text)
}
