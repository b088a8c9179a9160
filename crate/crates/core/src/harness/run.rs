use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RunSpec;
use crate::data::{generate, Dataset};
use crate::distill::{
    evaluate_student, student_config_for, train_student, train_teacher, Evaluation, FrozenTeacher,
    History, Mode, Strategy,
};
use crate::error::{Error, Result};
use crate::metrics::relative_delta;
use crate::nn::Model;

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub alpha: f64,
    pub seed: u64,
    pub acc_teacher: f64,
    pub acc_student: f64,
    pub uar_student: f64,
    pub eer_student: f64,
    /// Relative accuracy change against the no-distill student, in percent.
    /// `None` when the reference accuracy is zero.
    pub delta_acc_pct: Option<f64>,
    /// Relative EER reduction against the no-distill student, in percent.
    /// `None` when the reference EER is zero.
    pub delta_eer_pct: Option<f64>,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub record: RunRecord,
    pub history: History,
}

fn pair_seed(seed: u64) -> u64 {
    seed ^ 0x7061_6972
}

fn teacher_cell(seed: u64, mode: Mode) -> String {
    format!("teacher (mode {}, seed {seed})", mode_name(mode))
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::NonSequential => "non-sequential",
        Mode::Sequential => "sequential",
    }
}

fn cell_name(strategy: Strategy, alpha: f64, seed: u64) -> String {
    format!("cell (strategy {strategy}, alpha {alpha}, seed {seed})")
}

fn fit_teacher(spec: &RunSpec, ds: &Dataset, seed: u64, mode: Mode) -> Result<(FrozenTeacher, f64)> {
    let init = Model::init(spec.teacher_config(mode), seed)?;
    let (teacher, _) = train_teacher(ds, init, &spec.train, seed)?;
    let acc = teacher.accuracy(&ds.test())?;
    Ok((teacher, acc))
}

fn fit_student(
    spec: &RunSpec,
    ds: &Dataset,
    teacher: &FrozenTeacher,
    strategy: Strategy,
    alpha: f64,
    seed: u64,
    mode: Mode,
) -> Result<(Evaluation, History)> {
    let config = student_config_for(&spec.student_config(mode), strategy, ds.spec.privileged_dim);
    let trained = train_student(ds, Some(teacher), &config, strategy, alpha, &spec.train, seed)?;
    let eval = evaluate_student(&trained.model, &ds.test(), ds.num_classes(), pair_seed(seed))?;
    Ok((eval, trained.history))
}

fn optional_delta(before: f64, after: f64, higher_is_better: bool) -> Result<Option<f64>> {
    if before == 0.0 {
        Ok(None)
    } else {
        relative_delta(before, after, higher_is_better).map(Some)
    }
}

/// Cell coordinates in output order: strategy, then alpha, then seed.
fn cells(spec: &RunSpec) -> Vec<(Strategy, f64, u64)> {
    let mut strategies = spec.strategies.clone();
    strategies.sort();
    let mut alphas = spec.alphas.clone();
    alphas.sort_by(f64::total_cmp);
    let mut seeds = spec.seeds.clone();
    seeds.sort();
    let mut out = Vec::with_capacity(strategies.len() * alphas.len() * seeds.len());
    for &s in &strategies {
        for &a in &alphas {
            for &seed in &seeds {
                out.push((s, a, seed));
            }
        }
    }
    out
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::contract(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Run every cell of `spec` and return records (with training histories) in
/// strategy, alpha, seed order.
///
/// Teachers are trained once per seed and student architecture and shared by
/// all cells that use them. Deltas compare against a no-distill student of
/// the same architecture and seed. `workers` caps parallelism; `None` uses
/// the ambient thread pool.
pub fn run_matrix_detailed(spec: &RunSpec, workers: Option<usize>) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let ds = generate(&spec.dataset)?;
    let cells = cells(spec);

    let mut keys: Vec<(u64, Mode)> = cells
        .iter()
        .map(|&(s, _, seed)| (seed, spec.mode_for(s)))
        .collect();
    keys.sort();
    keys.dedup();

    in_pool(workers, || {
        let teachers: BTreeMap<(u64, Mode), (FrozenTeacher, f64)> = keys
            .par_iter()
            .map(|&(seed, mode)| {
                fit_teacher(spec, &ds, seed, mode)
                    .map(|t| ((seed, mode), t))
                    .map_err(|e| e.in_cell(teacher_cell(seed, mode)))
            })
            .collect::<Result<_>>()?;

        let references: BTreeMap<(u64, Mode), Evaluation> = keys
            .par_iter()
            .map(|&(seed, mode)| {
                let (teacher, _) = &teachers[&(seed, mode)];
                fit_student(spec, &ds, teacher, Strategy::NoDistill, 0.0, seed, mode)
                    .map(|(e, _)| ((seed, mode), e))
                    .map_err(|e| e.in_cell(format!("no-distill reference (seed {seed})")))
            })
            .collect::<Result<_>>()?;

        cells
            .par_iter()
            .map(|&(strategy, alpha, seed)| {
                let run = || -> Result<CellResult> {
                    let mode = spec.mode_for(strategy);
                    let (teacher, acc_teacher) = &teachers[&(seed, mode)];
                    let reference = references[&(seed, mode)];
                    let start = Instant::now();
                    let (eval, history) = fit_student(spec, &ds, teacher, strategy, alpha, seed, mode)?;
                    let wall = start.elapsed().as_secs_f64();
                    Ok(CellResult {
                        record: RunRecord {
                            strategy,
                            alpha,
                            seed,
                            acc_teacher: *acc_teacher,
                            acc_student: eval.accuracy,
                            uar_student: eval.unweighted_accuracy,
                            eer_student: eval.eer,
                            delta_acc_pct: optional_delta(reference.accuracy, eval.accuracy, true)?,
                            delta_eer_pct: optional_delta(reference.eer, eval.eer, false)?,
                            wall_time_seconds: wall,
                        },
                        history,
                    })
                };
                run().map_err(|e| e.in_cell(cell_name(strategy, alpha, seed)))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// [`run_matrix_detailed`] without the histories.
pub fn run_matrix(spec: &RunSpec, workers: Option<usize>) -> Result<Vec<RunRecord>> {
    Ok(run_matrix_detailed(spec, workers)?
        .into_iter()
        .map(|c| c.record)
        .collect())
}
