//! Encoder / aggregator / head model components and their parameters.
//!
//! A [`Model`] pairs a [`ModelConfig`] with [`ModelParams`]. Parameters are
//! grouped by component ([`Group`]) so training code can route different
//! gradients to different parts of the network.

mod checkpoint;
mod forward;

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{Bound, Embedded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Encoder,
    Aggregator,
    Head,
    Decoder,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Encoder, Group::Aggregator, Group::Head, Group::Decoder];

    pub fn name(self) -> &'static str {
        match self {
            Group::Encoder => "encoder",
            Group::Aggregator => "aggregator",
            Group::Head => "head",
            Group::Decoder => "decoder",
        }
    }

    pub fn from_name(s: &str) -> Option<Group> {
        Group::ALL.into_iter().find(|g| g.name() == s)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    MeanPool,
    RecurrentAttention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    pub state_dim: usize,
}

/// MLP from the embedding back to the privileged feature space. Only the
/// multitask baseline uses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub aggregator: Option<AggregatorConfig>,
    pub num_classes: usize,
    pub decoder: Option<DecoderConfig>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let enc = &self.encoder;
        if enc.input_dim == 0 {
            return Err(Error::config("encoder.input_dim", "must be positive"));
        }
        if enc.hidden_dims.is_empty() {
            return Err(Error::config("encoder.hidden_dims", "must be non-empty"));
        }
        if enc.hidden_dims.contains(&0) {
            return Err(Error::config("encoder.hidden_dims", "entries must be positive"));
        }
        if enc.embedding_dim == 0 {
            return Err(Error::config("encoder.embedding_dim", "must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "need at least 2 classes"));
        }
        if let Some(agg) = &self.aggregator {
            if agg.kind == AggregatorKind::RecurrentAttention && agg.state_dim != enc.embedding_dim {
                return Err(Error::config(
                    "aggregator.state_dim",
                    format!(
                        "recurrent-attention state dim {} must equal embedding dim {}",
                        agg.state_dim, enc.embedding_dim
                    ),
                ));
            }
        }
        if let Some(dec) = &self.decoder {
            if dec.output_dim == 0 || dec.hidden_dims.contains(&0) {
                return Err(Error::config("decoder", "dims must be positive"));
            }
        }
        Ok(())
    }

    pub fn is_sequential(&self) -> bool {
        self.aggregator.is_some()
    }

    /// Stable digest of the configuration, used by checkpoints.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Trainable tensors keyed by component group. Order within a group is the
/// order the forward pass consumes them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    groups: BTreeMap<Group, Vec<Param>>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, group: Group, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        let params = self.groups.entry(group).or_default();
        if params.iter().any(|p| p.name == name) {
            return Err(Error::contract(format!("duplicate parameter {group}.{name}")));
        }
        params.push(Param { name, value });
        Ok(())
    }

    pub fn group(&self, group: Group) -> &[Param] {
        self.groups.get(&group).map_or(&[], Vec::as_slice)
    }

    pub fn group_mut(&mut self, group: Group) -> &mut [Param] {
        self.groups.get_mut(&group).map_or(&mut [], Vec::as_mut_slice)
    }

    pub fn has_group(&self, group: Group) -> bool {
        self.groups.get(&group).is_some_and(|g| !g.is_empty())
    }

    pub fn get(&self, group: Group, name: &str) -> Option<&Tensor> {
        self.group(group).iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, group: Group, name: &str) -> Option<&mut Tensor> {
        self.group_mut(group)
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.value)
    }

    pub fn groups(&self) -> impl Iterator<Item = (Group, &[Param])> {
        self.groups.iter().map(|(g, ps)| (*g, ps.as_slice()))
    }

    pub fn num_scalars(&self) -> usize {
        self.groups.values().flatten().map(|p| p.value.len()).sum()
    }

    /// All parameter values flattened in group order.
    pub fn flatten(&self) -> Vec<f64> {
        self.groups
            .values()
            .flatten()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    /// Record every parameter on `tape` as a differentiable leaf.
    pub fn record(&self, tape: &mut Tape) -> BTreeMap<Group, Vec<Var>> {
        self.groups
            .iter()
            .map(|(g, ps)| (*g, ps.iter().map(|p| tape.leaf(p.value.clone())).collect()))
            .collect()
    }
}

/// Per-group gradients, aligned with [`ModelParams`] ordering.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGrads {
    groups: BTreeMap<Group, Vec<Tensor>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            groups: params
                .groups
                .iter()
                .map(|(g, ps)| (*g, ps.iter().map(|p| Tensor::zeros(p.value.shape())).collect()))
                .collect(),
        }
    }

    pub fn from_tape(vars: &BTreeMap<Group, Vec<Var>>, grads: &Gradients) -> Self {
        Self {
            groups: vars
                .iter()
                .map(|(g, vs)| (*g, vs.iter().map(|v| grads.get(*v)).collect()))
                .collect(),
        }
    }

    pub fn group(&self, group: Group) -> &[Tensor] {
        self.groups.get(&group).map_or(&[], Vec::as_slice)
    }

    pub fn groups(&self) -> impl Iterator<Item = (Group, &[Tensor])> {
        self.groups.iter().map(|(g, ts)| (*g, ts.as_slice()))
    }

    pub fn groups_mut(&mut self) -> impl Iterator<Item = (Group, &mut Vec<Tensor>)> {
        self.groups.iter_mut().map(|(g, ts)| (*g, ts))
    }

    /// `self += other`.
    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (g, ts) in self.groups.iter_mut() {
            for (t, o) in ts.iter_mut().zip(other.group(*g)) {
                t.data_mut().iter_mut().zip(o.data()).for_each(|(a, b)| *a += b);
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for ts in self.groups.values_mut() {
            for t in ts {
                t.data_mut().iter_mut().for_each(|v| *v *= c);
            }
        }
    }

    pub fn flatten_group(&self, group: Group) -> Vec<f64> {
        self.group(group)
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, params })
    }

    /// Deterministic Glorot-uniform initialization with zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound<'_> {
        Bound::new(self, tape)
    }
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-s..=s)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

fn group_rng(seed: u64, group: Group) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(group as u64 + 1);
    rng
}

fn init_mlp(params: &mut ModelParams, group: Group, rng: &mut ChaCha8Rng, dims: &[usize]) -> Result<()> {
    for (i, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        params.insert(group, format!("layer{i}.weight"), glorot(rng, fan_out, fan_in))?;
        params.insert(group, format!("layer{i}.bias"), Tensor::zeros(&[fan_out]))?;
    }
    Ok(())
}

/// Initialize parameters for `config`. Each group draws from its own stream
/// of the seeded generator, so adding a decoder leaves the other groups
/// unchanged.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut params = ModelParams::new();
    let enc = &config.encoder;
    let d = enc.embedding_dim;

    let mut dims = vec![enc.input_dim];
    dims.extend(&enc.hidden_dims);
    dims.push(d);
    init_mlp(&mut params, Group::Encoder, &mut group_rng(seed, Group::Encoder), &dims)?;

    if let Some(agg) = &config.aggregator {
        if agg.kind == AggregatorKind::RecurrentAttention {
            let rng = &mut group_rng(seed, Group::Aggregator);
            for gate in ["update", "candidate"] {
                params.insert(Group::Aggregator, format!("{gate}.input"), glorot(rng, d, d))?;
                params.insert(Group::Aggregator, format!("{gate}.state"), glorot(rng, d, d))?;
                params.insert(Group::Aggregator, format!("{gate}.bias"), Tensor::zeros(&[d]))?;
            }
            let u = glorot(rng, d, 1).reshaped(&[d])?;
            params.insert(Group::Aggregator, "attention", u)?;
        }
    }

    let rng = &mut group_rng(seed, Group::Head);
    params.insert(Group::Head, "weight", glorot(rng, config.num_classes, d))?;
    params.insert(Group::Head, "bias", Tensor::zeros(&[config.num_classes]))?;

    if let Some(dec) = &config.decoder {
        let mut dims = vec![d];
        dims.extend(&dec.hidden_dims);
        dims.push(dec.output_dim);
        init_mlp(&mut params, Group::Decoder, &mut group_rng(seed, Group::Decoder), &dims)?;
    }
    Ok(params)
}
