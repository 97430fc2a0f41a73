//! Per-rater rubric means with bootstrap intervals, and cross-rater averages.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::rubric::Question;
use super::scores::ScoreTable;
use super::StudyError;
use crate::provenance::Provenance;
use crate::stats::{bootstrap_ci, BootstrapConfig, Interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub rater_id: String,
    pub model_id: String,
    pub question: Question,
    pub n: usize,
    pub mean: f64,
    pub ci: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAverage {
    pub model_id: String,
    pub question: Question,
    /// Unweighted mean of the per-rater means.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub raters: Vec<String>,
    pub models: Vec<String>,
    pub cells: Vec<SummaryCell>,
    pub averages: Vec<ModelAverage>,
}

impl StudySummary {
    pub fn cell(&self, rater: &str, model: &str, q: Question) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.rater_id == rater && c.model_id == model && c.question == q)
    }

    pub fn average(&self, model: &str, q: Question) -> Option<f64> {
        self.averages.iter().find(|a| a.model_id == model && a.question == q).map(|a| a.mean)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unweighted mean of rater means, each rater counting once.
pub fn cross_rater_average(rater_means: &[f64]) -> f64 {
    mean(rater_means)
}

/// Three-decimal rendering used in summary tables.
pub fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

pub fn summarize_scores(table: &ScoreTable, cfg: &BootstrapConfig) -> Result<StudySummary, StudyError> {
    if table.rows.is_empty() {
        return Err(StudyError::EmptyTable);
    }
    let raters: Vec<String> = table.raters();
    let mut cells = Vec::new();
    let mut averages = Vec::new();
    for model in &table.models {
        for q in Question::ALL {
            let mut rater_means = Vec::new();
            for rater in &raters {
                let mut rows: Vec<_> =
                    table.rows.iter().filter(|r| &r.rater_id == rater && &r.model_id == model).collect();
                if rows.is_empty() {
                    continue;
                }
                rows.sort_by(|a, b| a.packet_id.cmp(&b.packet_id));
                let scores: Vec<f64> = rows.iter().map(|r| f64::from(r.score(q))).collect();
                let m = mean(&scores);
                let ci = bootstrap_ci(scores.len(), cfg, |idx| idx.iter().map(|&i| scores[i]).sum::<f64>() / idx.len() as f64)?;
                rater_means.push(m);
                cells.push(SummaryCell { rater_id: rater.clone(), model_id: model.clone(), question: q, n: scores.len(), mean: m, ci });
            }
            if !rater_means.is_empty() {
                averages.push(ModelAverage { model_id: model.clone(), question: q, mean: cross_rater_average(&rater_means) });
            }
        }
    }
    Ok(StudySummary { raters, models: table.models.clone(), cells, averages })
}

/// One row per (rater, model) with `mean (low-high)` per question, then one `Average` row per model.
pub fn write_summary_csv<W: Write>(
    mut out: W,
    summary: &StudySummary,
    provenance: Option<&Provenance>,
) -> Result<(), StudyError> {
    if let Some(p) = provenance {
        writeln!(out, "{}", p.comment_line())?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rater".to_string(), "model".to_string()];
    header.extend(Question::ALL.iter().map(|q| q.label().to_string()));
    w.write_record(&header)?;
    for rater in &summary.raters {
        for model in &summary.models {
            let mut row = vec![rater.clone(), model.clone()];
            for q in Question::ALL {
                row.push(match summary.cell(rater, model, q) {
                    Some(c) => format!("{} ({}-{})", fmt3(c.mean), fmt3(c.ci.low), fmt3(c.ci.high)),
                    None => String::new(),
                });
            }
            w.write_record(&row)?;
        }
    }
    for model in &summary.models {
        let mut row = vec!["Average".to_string(), model.clone()];
        for q in Question::ALL {
            row.push(summary.average(model, q).map(fmt3).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_mean() {
        assert_eq!(mean(&[3.0, 4.0, 4.0, 5.0]), 4.0);
    }

    #[test]
    fn published_cross_rater_average() {
        assert_eq!(fmt3(cross_rater_average(&[2.967, 2.950, 2.583])), "2.833");
    }
}
