//! Pairwise inter-rater agreement on the common subset, per question and model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::kappa::{kappa, KappaValue, Weighting, RUBRIC_CATEGORIES};
use super::rubric::Question;
use super::scores::ScoreTable;
use super::StudyError;
use crate::provenance::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AgreementValue {
    Defined { kappa: f64 },
    Undefined { observed_agreement: f64 },
    /// Some common cases lack a score from one of the two raters.
    Incomplete { missing: usize },
}

impl AgreementValue {
    pub fn kappa(&self) -> Option<f64> {
        match self {
            AgreementValue::Defined { kappa } => Some(*kappa),
            _ => None,
        }
    }

    fn cell(&self) -> String {
        match self {
            AgreementValue::Defined { kappa } => format!("{kappa:.6}"),
            AgreementValue::Undefined { .. } => "undefined".into(),
            AgreementValue::Incomplete { missing } => format!("incomplete({missing})"),
        }
    }
}

impl From<KappaValue> for AgreementValue {
    fn from(k: KappaValue) -> Self {
        match k {
            KappaValue::Defined { kappa } => AgreementValue::Defined { kappa },
            KappaValue::Undefined { observed_agreement } => AgreementValue::Undefined { observed_agreement },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub rater_a: String,
    pub rater_b: String,
    pub value: AgreementValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub question: Question,
    pub model_id: String,
    pub weighting: Weighting,
    pub raters: Vec<String>,
    /// Upper-triangle pairs (R1-R2, R1-R3, R2-R3, ...).
    pub entries: Vec<PairEntry>,
}

impl AgreementMatrix {
    /// Symmetric lookup; the diagonal is 1.
    pub fn get(&self, a: &str, b: &str) -> Option<AgreementValue> {
        if a == b {
            return self.raters.iter().any(|r| r == a).then_some(AgreementValue::Defined { kappa: 1.0 });
        }
        self.entries
            .iter()
            .find(|e| (e.rater_a == a && e.rater_b == b) || (e.rater_a == b && e.rater_b == a))
            .map(|e| e.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub rater_a: String,
    pub rater_b: String,
    /// `kappa(model_b) - kappa(model_a)`; absent when either side is not defined.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaMatrix {
    pub question: Question,
    pub model_a: String,
    pub model_b: String,
    pub entries: Vec<DeltaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub matrices: Vec<AgreementMatrix>,
    pub deltas: Vec<DeltaMatrix>,
}

impl AgreementReport {
    pub fn matrix(&self, model: &str, q: Question) -> Option<&AgreementMatrix> {
        self.matrices.iter().find(|m| m.model_id == model && m.question == q)
    }
}

pub fn rater_pairs(raters: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (i, a) in raters.iter().enumerate() {
        for b in &raters[i + 1..] {
            out.push((a.clone(), b.clone()));
        }
    }
    out
}

/// Entrywise `b - a` over matching rater pairs.
pub fn delta_matrix(a: &AgreementMatrix, b: &AgreementMatrix) -> DeltaMatrix {
    let entries = a
        .entries
        .iter()
        .map(|e| {
            let kb = b.get(&e.rater_a, &e.rater_b).and_then(|v| v.kappa());
            let delta = match (e.value.kappa(), kb) {
                (Some(x), Some(y)) => Some(y - x),
                _ => None,
            };
            DeltaEntry { rater_a: e.rater_a.clone(), rater_b: e.rater_b.clone(), delta }
        })
        .collect();
    DeltaMatrix { question: a.question, model_a: a.model_id.clone(), model_b: b.model_id.clone(), entries }
}

/// Pairwise kappa over `common_cases` for each question and model, plus delta
/// matrices for every model pair in order.
pub fn agreement_matrices(
    table: &ScoreTable,
    common_cases: &[String],
    raters: &[String],
    weighting: Weighting,
) -> Result<AgreementReport, StudyError> {
    let pairs = rater_pairs(raters);
    let mut matrices = Vec::new();
    for model in &table.models {
        for q in Question::ALL {
            let mut entries = Vec::new();
            for (ra, rb) in &pairs {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                let mut missing = 0;
                for case in common_cases {
                    match (table.lookup(ra, case, model), table.lookup(rb, case, model)) {
                        (Some(x), Some(y)) => {
                            xs.push(x.score(q));
                            ys.push(y.score(q));
                        }
                        _ => missing += 1,
                    }
                }
                let value = if missing > 0 || xs.is_empty() {
                    AgreementValue::Incomplete { missing: missing.max(1) }
                } else {
                    kappa(&xs, &ys, &RUBRIC_CATEGORIES, weighting)?.into()
                };
                entries.push(PairEntry { rater_a: ra.clone(), rater_b: rb.clone(), value });
            }
            matrices.push(AgreementMatrix {
                question: q,
                model_id: model.clone(),
                weighting,
                raters: raters.to_vec(),
                entries,
            });
        }
    }
    let mut deltas = Vec::new();
    for (i, ma) in table.models.iter().enumerate() {
        for mb in &table.models[i + 1..] {
            for q in Question::ALL {
                let a = matrices.iter().find(|m| &m.model_id == ma && m.question == q).expect("built above");
                let b = matrices.iter().find(|m| &m.model_id == mb && m.question == q).expect("built above");
                deltas.push(delta_matrix(a, b));
            }
        }
    }
    Ok(AgreementReport { matrices, deltas })
}

/// Heatmap-shaped CSV: one row per (model or delta, question), one column per rater pair.
pub fn write_agreement_csv<W: Write>(
    mut out: W,
    report: &AgreementReport,
    provenance: Option<&Provenance>,
) -> Result<(), StudyError> {
    if let Some(p) = provenance {
        writeln!(out, "{}", p.comment_line())?;
    }
    let mut w = csv::Writer::from_writer(out);
    let pairs: Vec<String> = report
        .matrices
        .first()
        .map(|m| m.entries.iter().map(|e| format!("{}-{}", e.rater_a, e.rater_b)).collect())
        .unwrap_or_default();
    let mut header = vec!["matrix".to_string(), "question".to_string()];
    header.extend(pairs);
    w.write_record(&header)?;
    for m in &report.matrices {
        let mut row = vec![m.model_id.clone(), m.question.to_string()];
        row.extend(m.entries.iter().map(|e| e.value.cell()));
        w.write_record(&row)?;
    }
    for d in &report.deltas {
        let mut row = vec![format!("delta({}-{})", d.model_b, d.model_a), d.question.to_string()];
        row.extend(d.entries.iter().map(|e| e.delta.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
