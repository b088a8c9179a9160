mod common;

use common::tiny_spec;
use privdistill::distill::{Strategy, TrainConfig};
use privdistill::harness::{
    emit_results, parse_results, read_results, render_results, run_matrix, strip_wall_time,
    summarize_sweep, NetSpec, ResultFormat, RunRecord, RunSpec, RESULTS_HEADER,
};
use privdistill::Error;

fn small_spec(strategies: &[Strategy], alphas: &[f64], seeds: &[u64]) -> RunSpec {
    let net = NetSpec { hidden_dims: vec![6], embedding_dim: 4, ..NetSpec::default() };
    RunSpec {
        dataset: tiny_spec(),
        teacher: net.clone(),
        student: net,
        strategies: strategies.to_vec(),
        alphas: alphas.to_vec(),
        seeds: seeds.to_vec(),
        train: TrainConfig { epochs: 3, batch_size: 8, ..TrainConfig::default() },
        ..RunSpec::default()
    }
}

#[test]
fn singleton_matrix_yields_one_record() {
    let records = run_matrix(&small_spec(&[Strategy::SeqAggregator], &[0.5], &[3]), Some(1)).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert_eq!((r.strategy, r.alpha, r.seed), (Strategy::SeqAggregator, 0.5, 3));
    for v in [r.acc_teacher, r.acc_student, r.uar_student, r.eer_student] {
        assert!((0.0..=1.0).contains(&v), "{r:?}");
    }
}

#[test]
fn records_are_sorted_and_reproducible() {
    let spec = small_spec(
        &[Strategy::SoftLabel, Strategy::NonseqEmbed, Strategy::NoDistill],
        &[0.5, 0.0],
        &[2, 1],
    );
    let a = run_matrix(&spec, Some(2)).unwrap();
    let b = run_matrix(&spec, Some(1)).unwrap();
    assert_eq!(a.len(), 12);
    let keys: Vec<_> = a.iter().map(|r| (r.strategy, r.alpha.to_bits(), r.seed)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let csv = |rs: &[RunRecord]| strip_wall_time(&render_results(rs, ResultFormat::Csv).unwrap());
    assert_eq!(csv(&a), csv(&b));
}

#[test]
fn alpha_zero_records_agree_within_a_mode() {
    let seq = [Strategy::SeqEncoder, Strategy::SeqAggregator, Strategy::SoftLabel, Strategy::Multitask, Strategy::NoDistill];
    let records = run_matrix(&small_spec(&seq, &[0.0], &[0, 1]), None).unwrap();
    for seed in [0, 1] {
        let accs: Vec<(f64, f64, f64)> = records
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| (r.acc_student, r.uar_student, r.eer_student))
            .collect();
        assert_eq!(accs.len(), seq.len());
        assert!(accs.windows(2).all(|w| w[0] == w[1]), "seed {seed}: {accs:?}");
    }
    for r in &records {
        assert_eq!(r.delta_acc_pct.unwrap_or(0.0), 0.0, "{r:?}");
    }
}

#[test]
fn emitted_files_round_trip() {
    let records = run_matrix(&small_spec(&[Strategy::SeqEncoder], &[0.0, 0.3], &[0]), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, format) in [("r.csv", ResultFormat::Csv), ("r.jsonl", ResultFormat::JsonLines)] {
        let path = dir.path().join(name);
        emit_results(&records, &path, format).unwrap();
        let first = std::fs::read(&path).unwrap();
        emit_results(&records, &path, format).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
        let back = read_results(&path).unwrap();
        let expected: Vec<RunRecord> = records.iter().map(RunRecord::rounded).collect();
        assert_eq!(back, expected);
    }
    let text = render_results(&records, ResultFormat::Csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER);
    assert_eq!(parse_results(&text).unwrap().len(), 2);
    let missing = dir.path().join("no/such/dir/r.csv");
    assert!(matches!(emit_results(&records, &missing, ResultFormat::Csv), Err(Error::Io { .. })));
}

#[test]
fn golden_header() {
    assert_eq!(
        RESULTS_HEADER,
        "strategy,alpha,seed,acc_teacher,acc_student,uar_student,eer_student,delta_acc_pct,delta_eer_pct,wall_time_seconds"
    );
}

#[test]
fn cell_failures_name_their_coordinates() {
    // Too few samples for every class to reach the test split.
    let mut spec = small_spec(&[Strategy::SeqAggregator], &[0.5], &[7]);
    spec.dataset.samples_per_class = 1;
    let err = run_matrix(&spec, None).unwrap_err();
    assert!(!err.is_config(), "{err}");
    let msg = err.to_string();
    assert!(msg.contains("seed 7"), "{msg}");
}

#[test]
fn invalid_specs_fail_before_training() {
    let mut spec = small_spec(&[Strategy::SeqAggregator], &[1.5], &[0]);
    let err = run_matrix(&spec, None).unwrap_err();
    assert!(err.is_config() && err.to_string().contains("alpha"), "{err}");
    spec.alphas = vec![0.5];
    spec.seeds.clear();
    assert!(run_matrix(&spec, None).unwrap_err().is_config());
}

fn record(strategy: Strategy, alpha: f64, seed: u64, acc: f64) -> RunRecord {
    RunRecord {
        strategy,
        alpha,
        seed,
        acc_teacher: 0.8,
        acc_student: acc,
        uar_student: acc,
        eer_student: 1.0 - acc,
        delta_acc_pct: Some(acc * 10.0),
        delta_eer_pct: Some(0.0),
        wall_time_seconds: 0.1,
    }
}

#[test]
fn summary_matches_direct_formulas() {
    let accs = [0.61, 0.74, 0.69];
    let rs: Vec<RunRecord> = accs
        .iter()
        .enumerate()
        .map(|(i, &a)| record(Strategy::SeqAggregator, 0.5, i as u64, a))
        .collect();
    let s = summarize_sweep(&rs).unwrap();
    let row = s.row(Strategy::SeqAggregator, 0.5).unwrap();
    let mean = accs.iter().sum::<f64>() / 3.0;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 2.0;
    assert!((row.acc_student.mean - mean).abs() < 1e-12);
    assert!((row.acc_student.std - var.sqrt()).abs() < 1e-12);
    assert_eq!(row.acc_teacher.std, 0.0);
    assert_eq!(row.seeds, 3);
}

#[test]
fn summary_flags_best_alpha_per_strategy() {
    let mut rs = Vec::new();
    for seed in 0..2 {
        rs.push(record(Strategy::NonseqEmbed, 0.0, seed, 0.60));
        rs.push(record(Strategy::NonseqEmbed, 0.5, seed, 0.70));
        rs.push(record(Strategy::NonseqEmbed, 0.6, seed, 0.65));
        rs.push(record(Strategy::SoftLabel, 0.0, seed, 0.60));
    }
    let s = summarize_sweep(&rs).unwrap();
    assert_eq!(s.best(Strategy::NonseqEmbed).unwrap().alpha, 0.5);
    assert_eq!(s.best(Strategy::SoftLabel).unwrap().alpha, 0.0);
    rs.pop();
    assert!(matches!(summarize_sweep(&rs), Err(Error::Contract(_))));
}
