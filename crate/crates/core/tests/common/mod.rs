//! Helpers shared by the integration test targets: brute-force oracles and
//! a finite-difference gradient checker.

#![allow(dead_code)]

use privdistill::data::{Dataset, DatasetSpec, PairedSample};
use privdistill::distill::{
    student_inputs, train_teacher, DistillTargets, FrozenTeacher, Strategy, TrainConfig,
};
use privdistill::metrics::ScoredPair;
use privdistill::nn::{
    Activation, AggregatorConfig, AggregatorKind, DecoderConfig, EncoderConfig, Group, Model,
    ModelConfig, ParamGrads,
};
use privdistill::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL: f64 = 1e-4;
pub const FD_ABS: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::vector(&(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
}

pub fn encoder(input_dim: usize, hidden: &[usize], embedding_dim: usize) -> EncoderConfig {
    EncoderConfig {
        input_dim,
        hidden_dims: hidden.to_vec(),
        embedding_dim,
        activation: Activation::Relu,
    }
}

pub fn config(
    input_dim: usize,
    embedding_dim: usize,
    aggregator: Option<AggregatorKind>,
    num_classes: usize,
    decoder_out: Option<usize>,
) -> ModelConfig {
    ModelConfig {
        encoder: encoder(input_dim, &[5], embedding_dim),
        aggregator: aggregator.map(|kind| AggregatorConfig {
            kind,
            state_dim: embedding_dim,
        }),
        num_classes,
        decoder: decoder_out.map(|output_dim| DecoderConfig {
            hidden_dims: vec![4],
            output_dim,
        }),
    }
}

/// Glorot-initialized model with every tensor (biases included) jittered so
/// that no coordinate sits at a special value.
pub fn random_model(config: ModelConfig, seed: u64) -> Model {
    let mut model = Model::init(config, seed).unwrap();
    let mut r = rng(seed ^ 0xabcd);
    let names: Vec<(Group, String)> = model
        .params
        .groups()
        .flat_map(|(g, ps)| ps.iter().map(move |p| (g, p.name.clone())))
        .collect();
    for (g, name) in names {
        for v in model.params.get_mut(g, &name).unwrap().data_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
    model
}

/// Compare analytic gradients of `loss` against central differences for
/// every parameter coordinate. Returns the worst `(abs_err, rel_err)` or a
/// description of the first failure.
pub fn check_gradients(
    model: &Model,
    loss: impl Fn(&Model) -> (f64, ParamGrads),
) -> Result<(f64, f64), String> {
    let (_, analytic) = loss(model);
    let mut probe = model.clone();
    let mut worst = (0.0f64, 0.0f64);
    let entries: Vec<(Group, String, usize)> = model
        .params
        .groups()
        .flat_map(|(g, ps)| ps.iter().enumerate().map(move |(i, p)| (g, p.name.clone(), i)))
        .collect();
    for (group, name, index) in entries {
        let n = model.params.get(group, &name).unwrap().len();
        for k in 0..n {
            let orig = model.params.get(group, &name).unwrap().data()[k];
            probe.params.get_mut(group, &name).unwrap().data_mut()[k] = orig + FD_STEP;
            let up = loss(&probe).0;
            probe.params.get_mut(group, &name).unwrap().data_mut()[k] = orig - FD_STEP;
            let down = loss(&probe).0;
            probe.params.get_mut(group, &name).unwrap().data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.group(group)[index].data()[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            if abs > FD_ABS && rel > FD_REL {
                return Err(format!(
                    "{group}.{name}[{k}]: analytic {a:e}, numeric {numeric:e}, abs {abs:e}, rel {rel:e}"
                ));
            }
            worst.0 = worst.0.max(abs);
            if abs > FD_ABS {
                worst.1 = worst.1.max(rel);
            }
        }
    }
    Ok(worst)
}

/// Loss closure for a full classification chain on `inputs`.
pub fn classification_loss(
    inputs: Vec<Tensor>,
    label: usize,
) -> impl Fn(&Model) -> (f64, ParamGrads) {
    move |m: &Model| {
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let xs: Vec<_> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let emb = bound.embed(&mut tape, &xs).unwrap();
        let logits = bound.head_forward(&mut tape, emb.pooled).unwrap();
        let l = tape.softmax_cross_entropy(logits, label).unwrap();
        let g = tape.backward(l).unwrap();
        (tape.value(l).item(), bound.param_grads(&g))
    }
}

/// Loss closure for encoder → decoder reconstruction.
pub fn reconstruction_loss(input: Tensor, target: Tensor) -> impl Fn(&Model) -> (f64, ParamGrads) {
    move |m: &Model| {
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape);
        let x = tape.constant(input.clone());
        let e = bound.encoder_forward(&mut tape, x).unwrap();
        let r = bound.decoder_forward(&mut tape, e).unwrap();
        let t = tape.constant(target.clone());
        let l = tape.mse(r, t).unwrap();
        let g = tape.backward(l).unwrap();
        (tape.value(l).item(), bound.param_grads(&g))
    }
}

/// Exhaustive EER: every candidate threshold, FAR/FRR counted directly,
/// ties broken toward the lowest threshold.
pub fn eer_oracle(pairs: &[ScoredPair]) -> f64 {
    let mut thresholds: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    thresholds.push(f64::NEG_INFINITY);
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let same: Vec<f64> = pairs.iter().filter(|p| p.same_class).map(|p| p.score).collect();
    let diff: Vec<f64> = pairs.iter().filter(|p| !p.same_class).map(|p| p.score).collect();
    let mut best: Option<(f64, f64)> = None;
    for t in thresholds {
        let far = diff.iter().filter(|&&s| s >= t).count() as f64 / diff.len() as f64;
        let frr = same.iter().filter(|&&s| s < t).count() as f64 / same.len() as f64;
        let gap = (far - frr).abs();
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, (far + frr) / 2.0));
        }
    }
    best.unwrap().1
}

/// Peak frame by direct softmax evaluation; first maximum wins.
pub fn peak_oracle(logits: &[Tensor]) -> usize {
    let mut best = 0;
    let mut best_conf = f64::NEG_INFINITY;
    for (j, l) in logits.iter().enumerate() {
        let m = l.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = l.data().iter().map(|v| (v - m).exp()).sum();
        let conf = 1.0 / z;
        if conf > best_conf {
            best_conf = conf;
            best = j;
        }
    }
    best
}

pub fn segment_average_oracle(frames: &[Tensor], r: usize, k: usize) -> Vec<f64> {
    let d = frames[0].len();
    let mut acc = vec![0.0; d];
    for f in &frames[r * k..r * (k + 1)] {
        for (a, v) in acc.iter_mut().zip(f.data()) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / r as f64).collect()
}

pub fn uar_oracle(preds: &[usize], labels: &[usize], num_classes: usize) -> f64 {
    let mut sum = 0.0;
    for c in 0..num_classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        let hits = idx.iter().filter(|&&i| preds[i] == c).count();
        sum += hits as f64 / idx.len() as f64;
    }
    sum / num_classes as f64
}

/// A small dataset spec for tests that train.
pub fn tiny_spec() -> DatasetSpec {
    DatasetSpec {
        num_classes: 3,
        samples_per_class: 12,
        primary_dim: 4,
        privileged_dim: 5,
        segments: 2,
        frames_per_segment: 2,
        ..DatasetSpec::default()
    }
}

pub fn sample_with(primary: Vec<Tensor>, privileged: Vec<Tensor>, label: usize) -> PairedSample {
    PairedSample {
        id: 0,
        label,
        primary,
        privileged,
    }
}

pub fn quick_cfg(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, ..TrainConfig::default() }
}

pub struct Teachers {
    pub nonseq: FrozenTeacher,
    pub seq: FrozenTeacher,
}

pub fn teachers(ds: &Dataset, emb: usize) -> Teachers {
    let cfg = quick_cfg(2);
    let c = config(ds.spec.privileged_dim, emb, None, ds.num_classes(), None);
    let nonseq = train_teacher(ds, Model::init(c, 11).unwrap(), &cfg, 11).unwrap().0;
    let c = config(
        ds.spec.privileged_dim,
        emb,
        Some(AggregatorKind::RecurrentAttention),
        ds.num_classes(),
        None,
    );
    let seq = train_teacher(ds, Model::init(c, 12).unwrap(), &cfg, 12).unwrap().0;
    Teachers { nonseq, seq }
}

pub fn teacher_for(t: &Teachers, strategy: Strategy) -> Option<&FrozenTeacher> {
    match strategy {
        Strategy::NonseqEmbed => Some(&t.nonseq),
        Strategy::NoDistill | Strategy::Multitask => None,
        _ => Some(&t.seq),
    }
}

pub fn student_config(spec: &DatasetSpec, emb: usize, strategy: Strategy) -> ModelConfig {
    if strategy == Strategy::NonseqEmbed {
        config(spec.primary_dim * spec.segments, emb, None, spec.num_classes, None)
    } else {
        let decoder = (strategy == Strategy::Multitask).then_some(spec.privileged_dim);
        config(spec.primary_dim, emb, Some(AggregatorKind::RecurrentAttention), spec.num_classes, decoder)
    }
}

pub const DISTILLING: [Strategy; 5] = [
    Strategy::NonseqEmbed,
    Strategy::SeqEncoder,
    Strategy::SeqAggregator,
    Strategy::SoftLabel,
    Strategy::Multitask,
];

pub fn assert_groups_equal(a: &Model, b: &Model, skip: &[Group]) {
    for (g, ps) in a.params.groups() {
        if skip.contains(&g) {
            continue;
        }
        for p in ps {
            let other = b.params.get(g, &p.name).unwrap();
            assert_eq!(p.value.data(), other.data(), "{g}.{}", p.name);
        }
    }
}

/// `L_Y` gradient from a tape that never sees the privileged loss.
pub fn label_only_grads(model: &Model, sample: &PairedSample) -> ParamGrads {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let xs: Vec<_> = student_inputs(&model.config, sample)
        .unwrap()
        .into_iter()
        .map(|x| tape.constant(x))
        .collect();
    let emb = bound.embed(&mut tape, &xs).unwrap();
    let logits = bound.head_forward(&mut tape, emb.pooled).unwrap();
    let loss = tape.softmax_cross_entropy(logits, sample.label).unwrap();
    bound.param_grads(&tape.backward(loss).unwrap())
}

/// `L_PI` gradient from a tape that never sees the label loss.
pub fn privileged_only_grads(
    model: &Model,
    sample: &PairedSample,
    targets: &DistillTargets,
    strategy: Strategy,
) -> ParamGrads {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let xs: Vec<_> = student_inputs(&model.config, sample)
        .unwrap()
        .into_iter()
        .map(|x| tape.constant(x))
        .collect();
    let emb = bound.embed(&mut tape, &xs).unwrap();
    let loss = match strategy {
        Strategy::NonseqEmbed => {
            let t = tape.constant(targets.peak.clone().unwrap());
            tape.mse(emb.pooled, t).unwrap()
        }
        Strategy::SeqAggregator => {
            let t = tape.constant(targets.aggregate.clone().unwrap());
            tape.mse(emb.pooled, t).unwrap()
        }
        Strategy::SeqEncoder => {
            let segs = targets.per_segment.clone().unwrap();
            let mut total = None;
            for (p, s) in emb.parts.iter().zip(segs) {
                let t = tape.constant(s);
                let d = tape.mse(*p, t).unwrap();
                total = Some(match total {
                    None => d,
                    Some(acc) => tape.add(acc, d).unwrap(),
                });
            }
            total.unwrap()
        }
        Strategy::SoftLabel => {
            let logits = bound.head_forward(&mut tape, emb.pooled).unwrap();
            tape.soft_target_cross_entropy(logits, targets.soft_labels.as_ref().unwrap()).unwrap()
        }
        Strategy::Multitask => {
            let r = bound.decoder_forward(&mut tape, emb.pooled).unwrap();
            let t = tape.constant(targets.privileged_mean.clone().unwrap());
            tape.mse(r, t).unwrap()
        }
        Strategy::NoDistill => unreachable!(),
    };
    bound.param_grads(&tape.backward(loss).unwrap())
}
