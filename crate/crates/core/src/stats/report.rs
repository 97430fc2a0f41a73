use std::io::Write;

use super::{ComparisonResult, TaskMetrics};
use crate::provenance::Provenance;

pub const METRIC_COLUMNS: [&str; 8] =
    ["model", "task", "accuracy", "ci_low", "ci_high", "f1", "f1_ci_low", "f1_ci_high"];

pub const COMPARISON_COLUMNS: [&str; 7] = ["task", "model_a", "model_b", "b", "c", "p_accuracy", "p_f1"];

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn start<W: Write>(out: &mut W, provenance: Option<&Provenance>) -> std::io::Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "{}", p.comment_line())?;
    }
    Ok(())
}

/// Metrics table with one row per (model, task). A `#` provenance line precedes the header.
pub fn write_metrics_csv<W: Write>(
    mut out: W,
    metrics: &[TaskMetrics],
    provenance: Option<&Provenance>,
) -> Result<(), csv::Error> {
    start(&mut out, provenance)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_COLUMNS)?;
    for m in metrics {
        w.write_record([
            m.model_id.clone(),
            m.task.to_string(),
            num(m.accuracy),
            num(m.acc_ci.low),
            num(m.acc_ci.high),
            num(m.f1),
            num(m.f1_ci.low),
            num(m.f1_ci.high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pairwise comparisons. A floored bootstrap p is written as `<0.001000`.
pub fn write_comparisons_csv<W: Write>(
    mut out: W,
    comparisons: &[ComparisonResult],
    provenance: Option<&Provenance>,
) -> Result<(), csv::Error> {
    start(&mut out, provenance)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_COLUMNS)?;
    for c in comparisons {
        w.write_record([
            c.task.to_string(),
            c.model_a.clone(),
            c.model_b.clone(),
            c.discordant.b.to_string(),
            c.discordant.c.to_string(),
            num(c.p_accuracy),
            c.p_f1.display(6),
        ])?;
    }
    w.flush()?;
    Ok(())
}
