use super::{FrozenTeacher, Mode, Strategy};
use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frozen-teacher targets for one sample. Only the fields the strategy
/// consumes are populated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistillTargets {
    /// Embedding of the most confident frame.
    pub peak: Option<Tensor>,
    /// Mean frame embedding per segment.
    pub per_segment: Option<Vec<Tensor>>,
    /// Aggregator output over all frames.
    pub aggregate: Option<Tensor>,
    /// Teacher class probabilities.
    pub soft_labels: Option<Tensor>,
    /// Mean raw privileged frame, the multitask reconstruction target.
    pub privileged_mean: Option<Tensor>,
}

impl DistillTargets {
    pub fn is_empty(&self) -> bool {
        *self == DistillTargets::default()
    }
}

/// Index of the frame whose top-class probability is highest. Ties go to the
/// earliest frame.
pub fn peak_frame_index(frame_logits: &[Tensor]) -> Result<usize> {
    if frame_logits.is_empty() {
        return Err(Error::contract("peak-frame selection over zero frames"));
    }
    let confidence: Vec<f64> = frame_logits
        .iter()
        .map(|l| {
            let p = l.softmax();
            p.data()[p.argmax()]
        })
        .collect();
    Ok(Tensor::vector(&confidence).argmax())
}

/// Embedding of the peak frame.
pub fn select_peak_frame(frame_embeddings: &[Tensor], frame_logits: &[Tensor]) -> Result<Tensor> {
    if frame_embeddings.len() != frame_logits.len() {
        return Err(Error::contract(format!(
            "{} frame embeddings but {} frame logits",
            frame_embeddings.len(),
            frame_logits.len()
        )));
    }
    let j = peak_frame_index(frame_logits)?;
    Ok(frame_embeddings[j].clone())
}

/// Mean of the embeddings of frames `r·k .. r·(k+1)`.
pub fn segment_average(frame_embeddings: &[Tensor], r: usize, k: usize) -> Result<Tensor> {
    if r == 0 {
        return Err(Error::contract("frames per segment must be at least 1"));
    }
    let end = r * (k + 1);
    if end > frame_embeddings.len() {
        return Err(Error::contract(format!(
            "segment {k} with {r} frames needs {end} frames, have {}",
            frame_embeddings.len()
        )));
    }
    Tensor::mean_of(&frame_embeddings[r * k..end])
}

fn require_mode(teacher: &FrozenTeacher, mode: Mode, strategy: Strategy) -> Result<()> {
    if teacher.mode() != mode {
        return Err(Error::contract(format!(
            "{strategy} needs a {mode:?} teacher, got {:?}",
            teacher.mode()
        )));
    }
    Ok(())
}

/// Targets `strategy` needs for `sample`. `teacher` may be `None` only for
/// strategies that do not consult it.
pub fn compute_targets(
    teacher: Option<&FrozenTeacher>,
    sample: &PairedSample,
    strategy: Strategy,
) -> Result<DistillTargets> {
    let mut t = DistillTargets::default();
    let teacher = match (strategy.needs_teacher(), teacher) {
        (false, _) => None,
        (true, Some(teacher)) => Some(teacher),
        (true, None) => return Err(Error::contract(format!("{strategy} needs a teacher"))),
    };
    match strategy {
        Strategy::NoDistill => {}
        Strategy::Multitask => t.privileged_mean = Some(sample.privileged_mean()?),
        Strategy::NonseqEmbed => {
            let teacher = teacher.expect("checked above");
            require_mode(teacher, Mode::NonSequential, strategy)?;
            let out = teacher.frame_outputs(&sample.privileged)?;
            t.peak = Some(select_peak_frame(&out.embeddings, &out.logits)?);
        }
        Strategy::SeqEncoder => {
            let teacher = teacher.expect("checked above");
            require_mode(teacher, Mode::Sequential, strategy)?;
            let m = sample.num_segments();
            if m == 0 || sample.privileged.len() % m != 0 {
                return Err(Error::contract(format!(
                    "{} frames do not divide into {m} segments",
                    sample.privileged.len()
                )));
            }
            let r = sample.privileged.len() / m;
            let out = teacher.frame_outputs(&sample.privileged)?;
            t.per_segment = Some(
                (0..m)
                    .map(|k| segment_average(&out.embeddings, r, k))
                    .collect::<Result<_>>()?,
            );
        }
        Strategy::SeqAggregator => {
            let teacher = teacher.expect("checked above");
            require_mode(teacher, Mode::Sequential, strategy)?;
            t.aggregate = Some(teacher.aggregate(&sample.privileged)?.0);
        }
        Strategy::SoftLabel => {
            let teacher = teacher.expect("checked above");
            let logits = match teacher.mode() {
                Mode::Sequential => teacher.aggregate(&sample.privileged)?.1,
                Mode::NonSequential => {
                    let out = teacher.frame_outputs(&sample.privileged)?;
                    out.logits[peak_frame_index(&out.logits)?].clone()
                }
            };
            t.soft_labels = Some(logits.softmax());
        }
    }
    Ok(t)
}
