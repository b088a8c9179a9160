use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use privdistill::data::{generate, write_dataset};
use privdistill::distill::{train_teacher, Mode};
use privdistill::harness::{
    parse_run_spec, read_results, render_results, run_matrix_detailed, summarize_sweep,
    ResultFormat, RunSpec,
};
use privdistill::nn::{write_checkpoint, Model};

#[derive(Parser)]
#[command(name = "privdistill", version, about = "Teacher-student distillation with privileged information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset described by a run spec.
    GenerateData {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one teacher and write its checkpoint.
    TrainTeacher {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training seed; defaults to the first seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Teacher architecture; defaults to the spec's baseline mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Train and evaluate every (strategy, alpha, seed) cell.
    RunMatrix {
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Results file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long, env = "PRIVDISTILL_WORKERS")]
        workers: Option<usize>,
        /// Run this single seed instead of the spec's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Write one training-history CSV per cell into this directory.
        #[arg(long)]
        history_dir: Option<PathBuf>,
    },
    /// Mean and spread over seeds per (strategy, alpha), with the best alpha
    /// per strategy flagged.
    Summarize {
        /// Results file in either output format.
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    JsonLines,
}

impl From<FormatArg> for ResultFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ResultFormat::Csv,
            FormatArg::JsonLines => ResultFormat::JsonLines,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    NonSequential,
    Sequential,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::NonSequential => Mode::NonSequential,
            ModeArg::Sequential => Mode::Sequential,
        }
    }
}

fn load_spec(path: Option<&Path>) -> Result<RunSpec> {
    match path {
        Some(p) => parse_run_spec(p).with_context(|| format!("loading run spec {}", p.display())),
        None => Ok(RunSpec::default()),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { spec, out, seed } => {
            let mut spec = load_spec(spec.as_deref())?;
            if let Some(seed) = seed {
                spec.dataset.seed = seed;
            }
            let ds = generate(&spec.dataset)?;
            write_dataset(&ds, &out)?;
            eprintln!(
                "wrote {} samples ({} train / {} val / {} test) to {}",
                ds.samples.len(),
                ds.train().len(),
                ds.val().len(),
                ds.test().len(),
                out.display()
            );
        }
        Command::TrainTeacher { spec, out, seed, mode } => {
            let spec = load_spec(spec.as_deref())?;
            let seed = seed.unwrap_or(spec.seeds[0]);
            let mode = mode.map(Mode::from).unwrap_or(spec.baseline_mode);
            let ds = generate(&spec.dataset)?;
            let init = Model::init(spec.teacher_config(mode), seed)?;
            let (teacher, report) = train_teacher(&ds, init, &spec.train, seed)?;
            write_checkpoint(&out, teacher.model())?;
            eprintln!(
                "teacher: final loss {:.4}, test accuracy {:.4}, checkpoint {}",
                report.epoch_loss.last().copied().unwrap_or(f64::NAN),
                teacher.accuracy(&ds.test())?,
                out.display()
            );
        }
        Command::RunMatrix {
            spec,
            out,
            format,
            workers,
            seed,
            history_dir,
        } => {
            let mut spec = load_spec(spec.as_deref())?;
            if let Some(seed) = seed {
                spec.seeds = vec![seed];
            }
            if workers == Some(0) {
                bail!(privdistill::Error::Config {
                    key: "workers".into(),
                    message: "must be at least 1".into(),
                });
            }
            let cells = run_matrix_detailed(&spec, workers)?;
            if let Some(dir) = &history_dir {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for c in &cells {
                    let r = &c.record;
                    let name = format!("{}-a{:.4}-s{}.csv", r.strategy, r.alpha, r.seed);
                    let path = dir.join(name);
                    std::fs::write(&path, c.history.to_csv())
                        .with_context(|| format!("writing {}", path.display()))?;
                }
            }
            let records: Vec<_> = cells.into_iter().map(|c| c.record).collect();
            write_output(out.as_deref(), &render_results(&records, format.into())?)?;
        }
        Command::Summarize { results, out } => {
            let records = read_results(&results)?;
            write_output(out.as_deref(), &summarize_sweep(&records)?.to_csv())?;
        }
    }
    Ok(())
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain()
        .find_map(|e| e.downcast_ref::<privdistill::Error>())
        .is_some_and(privdistill::Error::is_config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
