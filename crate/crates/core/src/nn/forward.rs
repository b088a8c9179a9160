use std::collections::BTreeMap;

use super::{AggregatorKind, Group, Model, ModelConfig, ParamGrads};
use crate::error::{Error, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// A model whose parameters have been recorded on a tape.
pub struct Bound<'m> {
    model: &'m Model,
    vars: BTreeMap<Group, Vec<Var>>,
}

impl<'m> Bound<'m> {
    pub(super) fn new(model: &'m Model, tape: &mut Tape) -> Self {
        Self {
            model,
            vars: model.params.record(tape),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    pub fn vars(&self) -> &BTreeMap<Group, Vec<Var>> {
        &self.vars
    }

    pub fn param_grads(&self, grads: &Gradients) -> ParamGrads {
        ParamGrads::from_tape(&self.vars, grads)
    }

    fn var(&self, group: Group, name: &str) -> Result<Var> {
        let idx = self
            .model
            .params
            .group(group)
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::config(format!("{group}.{name}"), "missing parameter"))?;
        Ok(self.vars[&group][idx])
    }

    fn mlp(&self, tape: &mut Tape, group: Group, x: Var) -> Result<Var> {
        let n_layers = self.model.params.group(group).len() / 2;
        if n_layers == 0 {
            return Err(Error::config(group.name(), "group has no layers"));
        }
        let mut h = x;
        for i in 0..n_layers {
            let w = self.var(group, &format!("layer{i}.weight"))?;
            let b = self.var(group, &format!("layer{i}.bias"))?;
            let wx = tape.matvec(w, h)?;
            h = tape.add(wx, b)?;
            if i + 1 < n_layers {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// ReLU MLP with a linear final layer; returns the embedding.
    pub fn encoder_forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.mlp(tape, Group::Encoder, x)
    }

    /// Affine map to class logits.
    pub fn head_forward(&self, tape: &mut Tape, e: Var) -> Result<Var> {
        let w = self.var(Group::Head, "weight")?;
        let b = self.var(Group::Head, "bias")?;
        let we = tape.matvec(w, e)?;
        tape.add(we, b)
    }

    /// Maps an embedding into the privileged feature space.
    pub fn decoder_forward(&self, tape: &mut Tape, e: Var) -> Result<Var> {
        if !self.model.params.has_group(Group::Decoder) {
            return Err(Error::config("decoder", "model has no decoder group"));
        }
        self.mlp(tape, Group::Decoder, e)
    }

    /// Hidden states of the gated recurrent scan:
    /// `z = σ(Wz·e + Uz·h + bz)`, `c = tanh(Wc·e + Uc·h + bc)`,
    /// `h ← h + z ⊙ (c − h)`, starting from `h = 0`.
    pub fn recurrent_states(&self, tape: &mut Tape, seq: &[Var]) -> Result<Vec<Var>> {
        let first = seq
            .first()
            .ok_or_else(|| Error::contract("aggregator needs a non-empty sequence"))?;
        let d = tape.shape(*first)[0];
        let wz = self.var(Group::Aggregator, "update.input")?;
        let uz = self.var(Group::Aggregator, "update.state")?;
        let bz = self.var(Group::Aggregator, "update.bias")?;
        let wc = self.var(Group::Aggregator, "candidate.input")?;
        let uc = self.var(Group::Aggregator, "candidate.state")?;
        let bc = self.var(Group::Aggregator, "candidate.bias")?;

        let mut h = tape.constant(Tensor::zeros(&[d]));
        let mut states = Vec::with_capacity(seq.len());
        for &e in seq {
            let z = {
                let a = tape.matvec(wz, e)?;
                let b = tape.matvec(uz, h)?;
                let s = tape.add(a, b)?;
                let s = tape.add(s, bz)?;
                tape.sigmoid(s)
            };
            let c = {
                let a = tape.matvec(wc, e)?;
                let b = tape.matvec(uc, h)?;
                let s = tape.add(a, b)?;
                let s = tape.add(s, bc)?;
                tape.tanh(s)
            };
            let delta = tape.sub(c, h)?;
            let step = tape.mul(z, delta)?;
            h = tape.add(h, step)?;
            states.push(h);
        }
        Ok(states)
    }

    /// Sequence of embeddings to a single embedding.
    pub fn aggregator_forward(&self, tape: &mut Tape, seq: &[Var]) -> Result<Var> {
        if seq.is_empty() {
            return Err(Error::contract("aggregator needs a non-empty sequence"));
        }
        let agg = self
            .model
            .config
            .aggregator
            .as_ref()
            .ok_or_else(|| Error::config("aggregator", "model has no aggregator"))?;
        match agg.kind {
            AggregatorKind::MeanPool => {
                let m = tape.stack(seq)?;
                tape.mean(m, Some(0))
            }
            AggregatorKind::RecurrentAttention => {
                let states = self.recurrent_states(tape, seq)?;
                let d = tape.shape(states[0])[0];
                let h = tape.stack(&states)?;
                let u = self.var(Group::Aggregator, "attention")?;
                let scores = tape.matvec(h, u)?;
                let weights = tape.softmax(scores);
                let weights = tape.reshape(weights, &[1, states.len()])?;
                let pooled = tape.matmul(weights, h)?;
                tape.reshape(pooled, &[d])
            }
        }
    }

    /// Embedding of a sample: the encoder output for a single input, or the
    /// aggregated per-segment embeddings for a sequential model.
    pub fn embed(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Embedded> {
        if self.model.config.is_sequential() {
            let parts = inputs
                .iter()
                .map(|x| self.encoder_forward(tape, *x))
                .collect::<Result<Vec<_>>>()?;
            let pooled = self.aggregator_forward(tape, &parts)?;
            Ok(Embedded {
                parts,
                pooled,
            })
        } else {
            let [x] = inputs else {
                return Err(Error::contract(format!(
                    "non-sequential model takes one input, got {}",
                    inputs.len()
                )));
            };
            let e = self.encoder_forward(tape, *x)?;
            Ok(Embedded {
                parts: vec![e],
                pooled: e,
            })
        }
    }
}

/// Intermediate embeddings of one forward pass.
#[derive(Debug, Clone)]
pub struct Embedded {
    /// Encoder output per input segment.
    pub parts: Vec<Var>,
    /// Embedding fed to the head.
    pub pooled: Var,
}
