use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::RunRecord;
use crate::distill::Strategy;
use crate::error::{Error, Result};

/// Mean and sample standard deviation over seeds. A single seed has zero
/// spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if let Some(&first) = values.first() {
            if values.iter().all(|&v| v == first) {
                return Stat { mean: first, std: 0.0 };
            }
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub alpha: f64,
    pub seeds: usize,
    pub acc_teacher: Stat,
    pub acc_student: Stat,
    pub uar_student: Stat,
    pub eer_student: Stat,
    /// `None` if any seed lacks a delta.
    pub delta_acc_pct: Option<Stat>,
    pub delta_eer_pct: Option<Stat>,
    /// Alpha with the highest mean student accuracy for this strategy
    /// (lowest alpha on ties).
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

pub const SUMMARY_HEADER: &str = "strategy,alpha,seeds,acc_teacher_mean,acc_teacher_std,acc_student_mean,acc_student_std,uar_student_mean,uar_student_std,eer_student_mean,eer_student_std,delta_acc_pct_mean,delta_acc_pct_std,delta_eer_pct_mean,delta_eer_pct_std,best";

impl SweepSummary {
    pub fn row(&self, strategy: Strategy, alpha: f64) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.alpha == alpha)
    }

    pub fn best(&self, strategy: Strategy) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.best)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        let stat = |s: Stat| format!("{:.4},{:.4}", s.mean, s.std);
        let opt = |s: Option<Stat>| s.map_or_else(|| ",".to_string(), stat);
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.4},{},{},{},{},{},{},{},{}",
                r.strategy,
                r.alpha,
                r.seeds,
                stat(r.acc_teacher),
                stat(r.acc_student),
                stat(r.uar_student),
                stat(r.eer_student),
                opt(r.delta_acc_pct),
                opt(r.delta_eer_pct),
                r.best,
            )
            .expect("write to String");
        }
        out
    }
}

type Key = (Strategy, u64);

/// Aggregate records per (strategy, alpha) over seeds.
pub fn summarize_sweep(records: &[RunRecord]) -> Result<SweepSummary> {
    if records.is_empty() {
        return Err(Error::contract("no records to summarize"));
    }
    let mut cells: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        if !r.alpha.is_finite() {
            return Err(Error::contract(format!("non-finite alpha in {} record", r.strategy)));
        }
        // Non-negative finite floats order the same as their bit patterns.
        cells.entry((r.strategy, (r.alpha + 0.0).to_bits())).or_default().push(r);
    }

    let mut reference: Option<BTreeSet<u64>> = None;
    for ((strategy, alpha), rs) in &cells {
        let seeds: BTreeSet<u64> = rs.iter().map(|r| r.seed).collect();
        if seeds.len() != rs.len() {
            return Err(Error::contract(format!(
                "duplicate seed in cell ({strategy}, {})",
                f64::from_bits(*alpha)
            )));
        }
        match &reference {
            None => reference = Some(seeds),
            Some(expected) if *expected != seeds => {
                return Err(Error::contract(format!(
                    "cell ({strategy}, {}) covers seeds {seeds:?}, expected {expected:?}",
                    f64::from_bits(*alpha)
                )));
            }
            Some(_) => {}
        }
    }

    let collect = |rs: &[&RunRecord], f: fn(&RunRecord) -> f64| -> Stat {
        Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    let collect_opt = |rs: &[&RunRecord], f: fn(&RunRecord) -> Option<f64>| -> Option<Stat> {
        rs.iter().map(|r| f(r)).collect::<Option<Vec<_>>>().map(|v| Stat::of(&v))
    };

    let mut rows: Vec<SummaryRow> = cells
        .iter()
        .map(|(&(strategy, alpha), rs)| SummaryRow {
            strategy,
            alpha: f64::from_bits(alpha),
            seeds: rs.len(),
            acc_teacher: collect(rs, |r| r.acc_teacher),
            acc_student: collect(rs, |r| r.acc_student),
            uar_student: collect(rs, |r| r.uar_student),
            eer_student: collect(rs, |r| r.eer_student),
            delta_acc_pct: collect_opt(rs, |r| r.delta_acc_pct),
            delta_eer_pct: collect_opt(rs, |r| r.delta_eer_pct),
            best: false,
        })
        .collect();

    let mut best: BTreeMap<Strategy, usize> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let e = best.entry(row.strategy).or_insert(i);
        if row.acc_student.mean > rows[*e].acc_student.mean {
            *e = i;
        }
    }
    for i in best.into_values() {
        rows[i].best = true;
    }
    Ok(SweepSummary { rows })
}
