//! Fixtures shared by the benchmarks.

use privdistill::data::{generate, Dataset, DatasetSpec};
use privdistill::distill::{train_teacher, FrozenTeacher, Mode, TrainConfig};
use privdistill::harness::RunSpec;
use privdistill::nn::Model;

/// Default run spec cut down to a few epochs.
pub fn bench_spec(epochs: usize) -> RunSpec {
    RunSpec {
        train: TrainConfig { epochs, ..TrainConfig::default() },
        ..RunSpec::default()
    }
}

pub fn dataset(spec: &RunSpec) -> Dataset {
    generate(&spec.dataset).expect("default spec is valid")
}

pub fn teacher(spec: &RunSpec, ds: &Dataset, mode: Mode) -> FrozenTeacher {
    let init = Model::init(spec.teacher_config(mode), 0).expect("valid config");
    train_teacher(ds, init, &spec.train, 0).expect("teacher trains").0
}

pub fn small_dataset_spec() -> DatasetSpec {
    DatasetSpec { samples_per_class: 20, ..DatasetSpec::default() }
}
