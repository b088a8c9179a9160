use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{minibatches, Mode, TrainConfig};
use crate::data::{Dataset, PairedSample};
use crate::distill::optim::Adam;
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::nn::{Model, ParamGrads};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A trained teacher. Parameters are only reachable through shared
/// references, so nothing downstream can update them.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenTeacher {
    model: Model,
}

/// Per-frame teacher outputs.
#[derive(Debug, Clone)]
pub struct FrameOutputs {
    pub embeddings: Vec<Tensor>,
    /// Head logits per frame. Empty for sequential teachers, whose head
    /// only sees the aggregate.
    pub logits: Vec<Tensor>,
}

impl FrozenTeacher {
    /// Wrap an already trained model, e.g. one read from a checkpoint.
    pub fn from_model(model: Model) -> Result<Self> {
        model.config.validate()?;
        Ok(Self { model })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn mode(&self) -> Mode {
        if self.model.config.is_sequential() {
            Mode::Sequential
        } else {
            Mode::NonSequential
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.model.config.encoder.embedding_dim
    }

    pub fn frame_outputs(&self, frames: &[Tensor]) -> Result<FrameOutputs> {
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape);
        let mut out = FrameOutputs {
            embeddings: Vec::with_capacity(frames.len()),
            logits: Vec::new(),
        };
        for f in frames {
            let x = tape.constant(f.clone());
            let e = bound.encoder_forward(&mut tape, x)?;
            out.embeddings.push(tape.value(e).clone());
            if self.mode() == Mode::NonSequential {
                let l = bound.head_forward(&mut tape, e)?;
                out.logits.push(tape.value(l).clone());
            }
        }
        Ok(out)
    }

    /// Aggregate embedding and its head logits (sequential teachers only).
    pub fn aggregate(&self, frames: &[Tensor]) -> Result<(Tensor, Tensor)> {
        if self.mode() != Mode::Sequential {
            return Err(Error::contract("aggregate embedding needs a sequential teacher"));
        }
        let mut tape = Tape::new();
        let bound = self.model.bind(&mut tape);
        let xs: Vec<Var> = frames.iter().map(|f| tape.constant(f.clone())).collect();
        let emb = bound.embed(&mut tape, &xs)?;
        let logits = bound.head_forward(&mut tape, emb.pooled)?;
        Ok((tape.value(emb.pooled).clone(), tape.value(logits).clone()))
    }

    /// Sample-level class prediction from the privileged frames. A
    /// non-sequential teacher averages the per-frame class probabilities.
    pub fn predict(&self, sample: &PairedSample) -> Result<usize> {
        match self.mode() {
            Mode::Sequential => Ok(self.aggregate(&sample.privileged)?.1.argmax()),
            Mode::NonSequential => {
                let out = self.frame_outputs(&sample.privileged)?;
                let probs: Vec<Tensor> = out.logits.iter().map(Tensor::softmax).collect();
                Ok(Tensor::mean_of(&probs)?.argmax())
            }
        }
    }

    pub fn accuracy(&self, samples: &[&PairedSample]) -> Result<f64> {
        let preds = samples.iter().map(|s| self.predict(s)).collect::<Result<Vec<_>>>()?;
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        accuracy(&preds, &labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherReport {
    /// Mean training cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
}

fn frame_step(model: &Model, frame: &Tensor, label: usize) -> Result<(f64, ParamGrads)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let x = tape.constant(frame.clone());
    let e = bound.encoder_forward(&mut tape, x)?;
    let logits = bound.head_forward(&mut tape, e)?;
    let loss = tape.softmax_cross_entropy(logits, label)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), bound.param_grads(&grads)))
}

fn sequence_step(model: &Model, sample: &PairedSample) -> Result<(f64, ParamGrads)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let xs: Vec<Var> = sample.privileged.iter().map(|f| tape.constant(f.clone())).collect();
    let emb = bound.embed(&mut tape, &xs)?;
    let logits = bound.head_forward(&mut tape, emb.pooled)?;
    let loss = tape.softmax_cross_entropy(logits, sample.label)?;
    let grads = tape.backward(loss)?;
    Ok((tape.value(loss).item(), bound.param_grads(&grads)))
}

/// Train a teacher on `(privileged, label)` pairs from the training split.
///
/// A non-sequential model is trained on individual frames, each carrying its
/// sample's label. A sequential model sees all frames of a sample at once.
pub fn train_teacher(
    dataset: &Dataset,
    init: Model,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(FrozenTeacher, TeacherReport)> {
    cfg.validate()?;
    init.config.validate()?;
    let train = dataset.train();
    if train.is_empty() {
        return Err(Error::contract("teacher training needs a non-empty training split"));
    }
    if init.config.encoder.input_dim != dataset.spec.privileged_dim {
        return Err(Error::config(
            "teacher.encoder.input_dim",
            format!(
                "teacher input dim {} does not match privileged dim {}",
                init.config.encoder.input_dim, dataset.spec.privileged_dim
            ),
        ));
    }
    if init.config.num_classes != dataset.num_classes() {
        return Err(Error::config("teacher.num_classes", "does not match the dataset"));
    }

    let sequential = init.config.is_sequential();
    let examples: Vec<(usize, usize)> = if sequential {
        (0..train.len()).map(|i| (i, 0)).collect()
    } else {
        train
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..s.privileged.len()).map(move |j| (i, j)))
            .collect()
    };

    let mut model = init;
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x7eac);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = TeacherReport { epoch_loss: Vec::with_capacity(cfg.epochs) };

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in minibatches(&order, cfg.batch_size) {
            let mut acc = ParamGrads::zeros_like(&model.params);
            for &ix in batch {
                let (si, fj) = examples[ix];
                let s = train[si];
                let (loss, g) = if sequential {
                    sequence_step(&model, s)?
                } else {
                    frame_step(&model, &s.privileged[fj], s.label)?
                };
                total += loss;
                acc.add_assign(&g);
            }
            acc.scale(1.0 / batch.len() as f64);
            adam.step(&mut model.params, &acc);
        }
        report.epoch_loss.push(total / examples.len() as f64);
    }
    Ok((FrozenTeacher { model }, report))
}
