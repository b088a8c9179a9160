use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::RunRecord;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str = "strategy,alpha,seed,acc_teacher,acc_student,uar_student,eer_student,delta_acc_pct,delta_eer_pct,wall_time_seconds";

const COLUMNS: [&str; 10] = [
    "strategy",
    "alpha",
    "seed",
    "acc_teacher",
    "acc_student",
    "uar_student",
    "eer_student",
    "delta_acc_pct",
    "delta_eer_pct",
    "wall_time_seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    JsonLines,
}

impl FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ResultFormat::Csv),
            "json-lines" | "jsonl" => Ok(ResultFormat::JsonLines),
            other => Err(Error::config("format", format!("unknown result format `{other}`"))),
        }
    }
}

fn real(v: f64) -> String {
    format!("{v:.4}")
}

fn fields(r: &RunRecord) -> [String; 10] {
    let opt = |v: Option<f64>| v.map(real);
    [
        r.strategy.name().to_string(),
        real(r.alpha),
        r.seed.to_string(),
        real(r.acc_teacher),
        real(r.acc_student),
        real(r.uar_student),
        real(r.eer_student),
        opt(r.delta_acc_pct).unwrap_or_default(),
        opt(r.delta_eer_pct).unwrap_or_default(),
        real(r.wall_time_seconds),
    ]
}

/// Render `records` in the given format. Reals carry four decimals and
/// missing deltas are empty (CSV) or `null` (JSON lines).
pub fn render_results(records: &[RunRecord], format: ResultFormat) -> Result<String> {
    if records.is_empty() {
        return Err(Error::contract("no records to emit"));
    }
    let mut out = String::new();
    match format {
        ResultFormat::Csv => {
            out.push_str(RESULTS_HEADER);
            out.push('\n');
            for r in records {
                out.push_str(&fields(r).join(","));
                out.push('\n');
            }
        }
        ResultFormat::JsonLines => {
            for r in records {
                let f = fields(r);
                out.push('{');
                for (i, (name, value)) in COLUMNS.iter().zip(&f).enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    let value = match i {
                        0 => format!("\"{value}\""),
                        _ if value.is_empty() => "null".to_string(),
                        _ => value.clone(),
                    };
                    write!(out, "\"{name}\":{value}").expect("write to String");
                }
                out.push_str("}\n");
            }
        }
    }
    Ok(out)
}

pub fn emit_results(records: &[RunRecord], path: &Path, format: ResultFormat) -> Result<()> {
    let text = render_results(records, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_error(line: usize, message: impl std::fmt::Display) -> Error {
    Error::contract(format!("results line {line}: {message}"))
}

fn parse_real(s: &str, line: usize, col: &str) -> Result<f64> {
    s.parse().map_err(|_| parse_error(line, format!("bad {col} `{s}`")))
}

fn parse_opt(s: &str, line: usize, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_real(s, line, col).map(Some)
    }
}

/// Parse results CSV as written by [`render_results`].
pub fn parse_results_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == RESULTS_HEADER => {}
        Some((_, h)) => return Err(parse_error(1, format!("unexpected header `{h}`"))),
        None => return Err(parse_error(1, "empty input")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != COLUMNS.len() {
            return Err(parse_error(n, format!("expected {} fields, got {}", COLUMNS.len(), f.len())));
        }
        out.push(RunRecord {
            strategy: f[0].parse().map_err(|e| parse_error(n, e))?,
            alpha: parse_real(f[1], n, COLUMNS[1])?,
            seed: f[2].parse().map_err(|_| parse_error(n, format!("bad seed `{}`", f[2])))?,
            acc_teacher: parse_real(f[3], n, COLUMNS[3])?,
            acc_student: parse_real(f[4], n, COLUMNS[4])?,
            uar_student: parse_real(f[5], n, COLUMNS[5])?,
            eer_student: parse_real(f[6], n, COLUMNS[6])?,
            delta_acc_pct: parse_opt(f[7], n, COLUMNS[7])?,
            delta_eer_pct: parse_opt(f[8], n, COLUMNS[8])?,
            wall_time_seconds: parse_real(f[9], n, COLUMNS[9])?,
        });
    }
    Ok(out)
}

pub fn parse_results_json_lines(text: &str) -> Result<Vec<RunRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_error(i + 1, e)))
        .collect()
}

/// Parse results in either format, detected from the first line.
pub fn parse_results(text: &str) -> Result<Vec<RunRecord>> {
    if text.trim_start().starts_with('{') {
        parse_results_json_lines(text)
    } else {
        parse_results_csv(text)
    }
}

pub fn read_results(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&text)
}

impl RunRecord {
    /// The record as it reads back after a round trip through the emitted
    /// text, i.e. with every real rounded to four decimals.
    pub fn rounded(&self) -> RunRecord {
        let r = |v: f64| real(v).parse::<f64>().expect("formatted real parses");
        RunRecord {
            strategy: self.strategy,
            alpha: r(self.alpha),
            seed: self.seed,
            acc_teacher: r(self.acc_teacher),
            acc_student: r(self.acc_student),
            uar_student: r(self.uar_student),
            eer_student: r(self.eer_student),
            delta_acc_pct: self.delta_acc_pct.map(r),
            delta_eer_pct: self.delta_eer_pct.map(r),
            wall_time_seconds: r(self.wall_time_seconds),
        }
    }
}

/// Used by callers that check determinism: the wall-time column varies
/// between otherwise identical runs.
pub fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .fold(String::new(), |mut acc, l| {
            acc.push_str(l);
            acc.push('\n');
            acc
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::Strategy;

    fn record() -> RunRecord {
        RunRecord {
            strategy: Strategy::SeqAggregator,
            alpha: 0.5,
            seed: 3,
            acc_teacher: 0.91234,
            acc_student: 0.7,
            uar_student: 0.69996,
            eer_student: 0.125,
            delta_acc_pct: Some(2.649),
            delta_eer_pct: None,
            wall_time_seconds: 1.5,
        }
    }

    #[test]
    fn csv_layout() {
        let text = render_results(&[record()], ResultFormat::Csv).unwrap();
        assert_eq!(
            text,
            format!(
                "{RESULTS_HEADER}\nseq-aggregator,0.5000,3,0.9123,0.7000,0.7000,0.1250,2.6490,,1.5000\n"
            )
        );
    }

    #[test]
    fn json_lines_layout_and_round_trip() {
        let text = render_results(&[record()], ResultFormat::JsonLines).unwrap();
        assert!(text.starts_with("{\"strategy\":\"seq-aggregator\",\"alpha\":0.5000,\"seed\":3,"));
        assert!(text.contains("\"delta_eer_pct\":null"));
        assert_eq!(parse_results(&text).unwrap(), vec![record().rounded()]);
    }

    #[test]
    fn csv_round_trip_is_rounded_record() {
        let text = render_results(&[record(), record()], ResultFormat::Csv).unwrap();
        assert_eq!(parse_results(&text).unwrap(), vec![record().rounded(); 2]);
    }

    #[test]
    fn empty_and_malformed_input() {
        assert!(render_results(&[], ResultFormat::Csv).is_err());
        assert!(parse_results_csv("a,b\n").is_err());
        assert!(parse_results_csv(&format!("{RESULTS_HEADER}\nno-distill,0.0\n")).is_err());
        assert!("xml".parse::<ResultFormat>().unwrap_err().is_config());
    }

    #[test]
    fn wall_time_stripped() {
        assert_eq!(strip_wall_time("a,b,c\n1,2,3\n"), "a,b\n1,2\n");
    }
}
