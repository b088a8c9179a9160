//! Teacher training, privileged-target extraction and student training with
//! per-group gradient mixing.

pub mod optim;
mod strategy;
mod student;
mod targets;
mod teacher;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use optim::Adam;
pub use strategy::{MixSpec, Mode, Strategy};
pub use student::{
    evaluate_student, mix_gradients, mixed_step, model_mode, sample_gradients, student_accuracy,
    student_config_for, student_forward, student_inputs, student_losses, train_student,
    verification_pairs, EmbeddingDistance, EpochRecord, Evaluation, History, SampleGrads,
    StudentLosses, TrainedStudent,
};
pub use targets::{compute_targets, peak_frame_index, segment_average, select_peak_frame, DistillTargets};
pub use teacher::{train_teacher, FrameOutputs, FrozenTeacher, TeacherReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub embedding_distance: EmbeddingDistance,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            embedding_distance: EmbeddingDistance::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive and finite"));
        }
        Ok(())
    }
}

fn minibatches(order: &[usize], batch_size: usize) -> std::slice::Chunks<'_, usize> {
    order.chunks(batch_size)
}
