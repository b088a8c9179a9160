//! Learning with privileged information by teacher-student distillation.
//!
//! A teacher network is trained on a privileged modality that is only
//! available at training time. Its frozen embeddings then serve as extra
//! targets for a student that sees the primary modality alone. The student's
//! encoder (and, in the sequential setting, its aggregator) is trained on a
//! weighted mix of the label gradient and the embedding-matching gradient;
//! the classification head only ever sees the label gradient.

mod binio;
pub mod data;
pub mod distill;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
