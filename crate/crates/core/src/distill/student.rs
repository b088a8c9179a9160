use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::targets::{compute_targets, DistillTargets};
use super::{minibatches, FrozenTeacher, MixSpec, Mode, Strategy, TrainConfig};
use crate::data::{Dataset, PairedSample};
use crate::error::{Error, Result};
use crate::metrics::{self, ScoredPair};
use crate::nn::{Bound, DecoderConfig, Model, ModelConfig, ModelParams, ParamGrads};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Distance used for embedding-matching losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingDistance {
    #[default]
    Mse,
    /// `1 − cosine similarity`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentLosses {
    /// Cross-entropy against the ground-truth label.
    pub loss_y: f64,
    /// Privileged-information loss; zero for `no-distill`.
    pub loss_pi: f64,
}

/// Both single-loss gradients for one sample.
#[derive(Debug, Clone)]
pub struct SampleGrads {
    pub losses: StudentLosses,
    pub label: ParamGrads,
    pub privileged: ParamGrads,
    pub prediction: usize,
}

pub fn model_mode(config: &ModelConfig) -> Mode {
    if config.is_sequential() {
        Mode::Sequential
    } else {
        Mode::NonSequential
    }
}

/// Student inputs for a sample: all segments concatenated for a
/// non-sequential model, one tensor per segment otherwise.
pub fn student_inputs(config: &ModelConfig, sample: &PairedSample) -> Result<Vec<Tensor>> {
    match model_mode(config) {
        Mode::Sequential => Ok(sample.primary.clone()),
        Mode::NonSequential => Ok(vec![Tensor::concat(&sample.primary)?]),
    }
}

fn check_compat(config: &ModelConfig, strategy: Strategy) -> Result<()> {
    if let Some(mode) = strategy.required_mode() {
        if model_mode(config) != mode {
            return Err(Error::contract(format!(
                "{strategy} needs a {mode:?} student, got {:?}",
                model_mode(config)
            )));
        }
    }
    if strategy == Strategy::Multitask && config.decoder.is_none() {
        return Err(Error::config("student.decoder", "multitask needs a decoder"));
    }
    Ok(())
}

struct Graph {
    loss_y: Var,
    loss_pi: Option<Var>,
    logits: Var,
    embedding: Var,
}

fn distance(tape: &mut Tape, kind: EmbeddingDistance, a: Var, b: Var) -> Result<Var> {
    match kind {
        EmbeddingDistance::Mse => tape.mse(a, b),
        EmbeddingDistance::Cosine => tape.cosine_distance(a, b),
    }
}

fn missing(field: &str, strategy: Strategy) -> Error {
    Error::contract(format!("{strategy} needs the `{field}` target"))
}

fn build_graph(
    tape: &mut Tape,
    bound: &Bound<'_>,
    sample: &PairedSample,
    targets: &DistillTargets,
    strategy: Strategy,
    dist: EmbeddingDistance,
) -> Result<Graph> {
    let inputs = student_inputs(bound.config(), sample)?;
    let xs: Vec<Var> = inputs.into_iter().map(|t| tape.constant(t)).collect();
    let emb = bound.embed(tape, &xs)?;
    let logits = bound.head_forward(tape, emb.pooled)?;
    let loss_y = tape.softmax_cross_entropy(logits, sample.label)?;

    let loss_pi = match strategy {
        Strategy::NoDistill => None,
        Strategy::NonseqEmbed => {
            let peak = targets.peak.as_ref().ok_or_else(|| missing("peak", strategy))?;
            let t = tape.constant(peak.clone());
            Some(distance(tape, dist, emb.pooled, t)?)
        }
        Strategy::SeqEncoder => {
            let segs = targets
                .per_segment
                .as_ref()
                .ok_or_else(|| missing("per_segment", strategy))?;
            if segs.len() != emb.parts.len() {
                return Err(Error::contract(format!(
                    "{} segment targets for {} segments",
                    segs.len(),
                    emb.parts.len()
                )));
            }
            let mut total: Option<Var> = None;
            for (part, target) in emb.parts.iter().zip(segs) {
                let t = tape.constant(target.clone());
                let d = distance(tape, dist, *part, t)?;
                total = Some(match total {
                    None => d,
                    Some(acc) => tape.add(acc, d)?,
                });
            }
            total
        }
        Strategy::SeqAggregator => {
            let agg = targets
                .aggregate
                .as_ref()
                .ok_or_else(|| missing("aggregate", strategy))?;
            let t = tape.constant(agg.clone());
            Some(distance(tape, dist, emb.pooled, t)?)
        }
        Strategy::SoftLabel => {
            let s = targets
                .soft_labels
                .as_ref()
                .ok_or_else(|| missing("soft_labels", strategy))?;
            Some(tape.soft_target_cross_entropy(logits, s)?)
        }
        Strategy::Multitask => {
            let m = targets
                .privileged_mean
                .as_ref()
                .ok_or_else(|| missing("privileged_mean", strategy))?;
            let recon = bound.decoder_forward(tape, emb.pooled)?;
            let t = tape.constant(m.clone());
            Some(tape.mse(recon, t)?)
        }
    };
    Ok(Graph {
        loss_y,
        loss_pi,
        logits,
        embedding: emb.pooled,
    })
}

/// `L_Y` and `L_PI` for one sample.
pub fn student_losses(
    student: &Model,
    sample: &PairedSample,
    targets: &DistillTargets,
    strategy: Strategy,
    dist: EmbeddingDistance,
) -> Result<StudentLosses> {
    check_compat(&student.config, strategy)?;
    let mut tape = Tape::new();
    let bound = student.bind(&mut tape);
    let g = build_graph(&mut tape, &bound, sample, targets, strategy, dist)?;
    Ok(StudentLosses {
        loss_y: tape.value(g.loss_y).item(),
        loss_pi: g.loss_pi.map_or(0.0, |v| tape.value(v).item()),
    })
}

/// Gradients of `L_Y` and of `L_PI` from two backward passes over one tape.
pub fn sample_gradients(
    student: &Model,
    sample: &PairedSample,
    targets: &DistillTargets,
    strategy: Strategy,
    dist: EmbeddingDistance,
) -> Result<SampleGrads> {
    check_compat(&student.config, strategy)?;
    let mut tape = Tape::new();
    let bound = student.bind(&mut tape);
    let g = build_graph(&mut tape, &bound, sample, targets, strategy, dist)?;
    let label = bound.param_grads(&tape.backward(g.loss_y)?);
    let privileged = match g.loss_pi {
        Some(l) => bound.param_grads(&tape.backward(l)?),
        None => ParamGrads::zeros_like(&student.params),
    };
    Ok(SampleGrads {
        losses: StudentLosses {
            loss_y: tape.value(g.loss_y).item(),
            loss_pi: g.loss_pi.map_or(0.0, |v| tape.value(v).item()),
        },
        label,
        privileged,
        prediction: tape.value(g.logits).argmax(),
    })
}

/// Per-group effective gradient: routed groups get
/// `(1 − α)·∇L_Y + α·∇L_PI`, every other group gets `∇L_Y`.
pub fn mix_gradients(label: &ParamGrads, privileged: &ParamGrads, mix: &MixSpec) -> ParamGrads {
    let alpha = mix.alpha();
    let mut out = label.clone();
    for (group, tensors) in out.groups_mut() {
        if !mix.routes(group) {
            continue;
        }
        for (t, p) in tensors.iter_mut().zip(privileged.group(group)) {
            for (y, pi) in t.data_mut().iter_mut().zip(p.data()) {
                *y = (1.0 - alpha) * *y + alpha * pi;
            }
        }
    }
    out
}

/// Mix the two gradients per group and apply one Adam update.
pub fn mixed_step(
    params: &mut ModelParams,
    label: &ParamGrads,
    privileged: &ParamGrads,
    mix: &MixSpec,
    optimizer: &mut Adam,
) {
    let g = mix_gradients(label, privileged, mix);
    optimizer.step(params, &g);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss_y: f64,
    pub mean_loss_pi: f64,
    /// Accuracy of the predictions made while the epoch was being trained.
    pub train_acc: f64,
    /// Validation accuracy after the epoch; `None` with an empty split.
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,mean_loss_y,mean_loss_pi,train_acc,val_acc";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let val = e.val_acc.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{}",
                e.epoch, e.mean_loss_y, e.mean_loss_pi, e.train_acc, val
            );
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedStudent {
    pub model: Model,
    pub history: History,
}

/// Student config as trained for `strategy`: multitask gets a decoder into
/// the privileged feature space when none is configured.
pub fn student_config_for(base: &ModelConfig, strategy: Strategy, privileged_dim: usize) -> ModelConfig {
    let mut cfg = base.clone();
    if strategy == Strategy::Multitask && cfg.decoder.is_none() {
        cfg.decoder = Some(DecoderConfig {
            hidden_dims: vec![cfg.encoder.embedding_dim],
            output_dim: privileged_dim,
        });
    }
    cfg
}

/// Train a student on the training split.
///
/// Each mini-batch averages the per-sample label and privileged gradients
/// separately, mixes them per group and takes one Adam step. Shuffling and
/// initialization are fully determined by `seed`.
pub fn train_student(
    dataset: &Dataset,
    teacher: Option<&FrozenTeacher>,
    student: &ModelConfig,
    strategy: Strategy,
    alpha: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedStudent> {
    cfg.validate()?;
    let mix = MixSpec::for_strategy(strategy, alpha)?;
    let config = student_config_for(student, strategy, dataset.spec.privileged_dim);
    config.validate()?;
    check_compat(&config, strategy)?;
    let expected_input = match model_mode(&config) {
        Mode::Sequential => dataset.spec.primary_dim,
        Mode::NonSequential => dataset.spec.primary_dim * dataset.spec.segments,
    };
    if config.encoder.input_dim != expected_input {
        return Err(Error::config(
            "student.encoder.input_dim",
            format!("expected {expected_input}, got {}", config.encoder.input_dim),
        ));
    }
    if config.num_classes != dataset.num_classes() {
        return Err(Error::config("student.num_classes", "does not match the dataset"));
    }
    if let (true, Some(t)) = (strategy.needs_teacher(), teacher) {
        if matches!(
            strategy,
            Strategy::NonseqEmbed | Strategy::SeqEncoder | Strategy::SeqAggregator
        ) && t.embedding_dim() != config.encoder.embedding_dim
        {
            return Err(Error::config(
                "student.encoder.embedding_dim",
                format!(
                    "student embedding dim {} differs from teacher's {}",
                    config.encoder.embedding_dim,
                    t.embedding_dim()
                ),
            ));
        }
    }

    let train = dataset.train();
    if train.is_empty() {
        return Err(Error::contract("student training needs a non-empty training split"));
    }
    let val = dataset.val();
    let targets: Vec<DistillTargets> = train
        .iter()
        .map(|s| compute_targets(teacher, s, strategy))
        .collect::<Result<_>>()?;

    let mut model = Model::init(config, seed)?;
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5bd1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_y, mut sum_pi, mut hits) = (0.0, 0.0, 0usize);
        for batch in minibatches(&order, cfg.batch_size) {
            let mut gy = ParamGrads::zeros_like(&model.params);
            let mut gpi = ParamGrads::zeros_like(&model.params);
            for &i in batch {
                let sg = sample_gradients(&model, train[i], &targets[i], strategy, cfg.embedding_distance)?;
                sum_y += sg.losses.loss_y;
                sum_pi += sg.losses.loss_pi;
                hits += usize::from(sg.prediction == train[i].label);
                gy.add_assign(&sg.label);
                gpi.add_assign(&sg.privileged);
            }
            let inv = 1.0 / batch.len() as f64;
            gy.scale(inv);
            gpi.scale(inv);
            mixed_step(&mut model.params, &gy, &gpi, &mix, &mut adam);
        }
        let n = train.len() as f64;
        let val_acc = if val.is_empty() {
            None
        } else {
            Some(student_accuracy(&model, &val)?)
        };
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss_y: sum_y / n,
            mean_loss_pi: sum_pi / n,
            train_acc: hits as f64 / n,
            val_acc,
        });
    }
    Ok(TrainedStudent { model, history })
}

/// Class prediction and final embedding for one sample.
pub fn student_forward(model: &Model, sample: &PairedSample) -> Result<(usize, Tensor)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let g = build_graph(
        &mut tape,
        &bound,
        sample,
        &DistillTargets::default(),
        Strategy::NoDistill,
        EmbeddingDistance::Mse,
    )?;
    Ok((tape.value(g.logits).argmax(), tape.value(g.embedding).clone()))
}

pub fn student_accuracy(model: &Model, samples: &[&PairedSample]) -> Result<f64> {
    let mut preds = Vec::with_capacity(samples.len());
    for s in samples {
        preds.push(student_forward(model, s)?.0);
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    metrics::accuracy(&preds, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub unweighted_accuracy: f64,
    pub eer: f64,
}

/// All same-class pairs plus an equal number (or all, if fewer) of
/// different-class pairs drawn without replacement, scored by cosine
/// similarity.
pub fn verification_pairs(embeddings: &[Tensor], labels: &[usize], seed: u64) -> Result<Vec<ScoredPair>> {
    let mut same = Vec::new();
    let mut diff = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                same.push((i, j));
            } else {
                diff.push((i, j));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = same.len().min(diff.len());
    let picked: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, diff.len(), k)
        .into_iter()
        .map(|ix| diff[ix])
        .collect();
    same.iter()
        .map(|p| (p, true))
        .chain(picked.iter().map(|p| (p, false)))
        .map(|(&(i, j), same_class)| {
            Ok(ScoredPair {
                score: metrics::cosine_score(&embeddings[i], &embeddings[j])?,
                same_class,
            })
        })
        .collect()
}

/// Identification accuracy, unweighted accuracy and verification EER.
pub fn evaluate_student(
    model: &Model,
    samples: &[&PairedSample],
    num_classes: usize,
    pair_seed: u64,
) -> Result<Evaluation> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut embs = Vec::with_capacity(samples.len());
    for s in samples {
        let (p, e) = student_forward(model, s)?;
        preds.push(p);
        embs.push(e);
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let pairs = verification_pairs(&embs, &labels, pair_seed)?;
    Ok(Evaluation {
        accuracy: metrics::accuracy(&preds, &labels)?,
        unweighted_accuracy: metrics::unweighted_accuracy(&preds, &labels, num_classes)?,
        eer: metrics::compute_eer(&pairs)?,
    })
}
