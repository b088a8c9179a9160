//! Experiment matrices: run specs, result tables and sweep summaries.

mod results;
mod run;
mod spec;
mod summary;

pub use results::{
    emit_results, parse_results, parse_results_csv, parse_results_json_lines, read_results,
    render_results, strip_wall_time, ResultFormat, RESULTS_HEADER,
};
pub use run::{run_matrix, run_matrix_detailed, CellResult, RunRecord};
pub use spec::{parse_run_spec, parse_run_spec_str, NetSpec, RunSpec};
pub use summary::{summarize_sweep, Stat, SummaryRow, SweepSummary, SUMMARY_HEADER};
