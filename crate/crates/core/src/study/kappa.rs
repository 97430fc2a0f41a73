//! Cohen's kappa, unweighted and quadratic-weighted.
//!
//! Computed from integer counts: with row/column marginals `r`, `c` and
//! weights `w`, `kappa_w = 1 - n * sum(w * O) / sum(w_ij * r_i * c_j)`.
//! Unweighted kappa is the 0/1 disagreement-weight special case.

use serde::{Deserialize, Serialize};

use super::StudyError;

pub const RUBRIC_CATEGORIES: [u8; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    None,
    Quadratic,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "unweighted" | "cohen" => Ok(Weighting::None),
            "quadratic" | "qwk" => Ok(Weighting::Quadratic),
            _ => Err(format!("unknown weighting `{s}` (expected none or quadratic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum KappaValue {
    Defined { kappa: f64 },
    /// Expected disagreement is zero; kappa has no value.
    Undefined { observed_agreement: f64 },
}

impl KappaValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            KappaValue::Defined { kappa } => Some(*kappa),
            KappaValue::Undefined { .. } => None,
        }
    }
}

/// Disagreement weight between category indices `i` and `j`, unnormalized.
/// Normalizing by `(k-1)^2` cancels in the ratio.
fn weight(weighting: Weighting, i: usize, j: usize) -> u64 {
    match weighting {
        Weighting::None => u64::from(i != j),
        Weighting::Quadratic => (i.abs_diff(j) as u64).pow(2),
    }
}

/// Kappa between paired ratings over an ordered category list.
pub fn kappa(a: &[u8], b: &[u8], categories: &[u8], weighting: Weighting) -> Result<KappaValue, StudyError> {
    if a.len() != b.len() {
        return Err(StudyError::Unpaired(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StudyError::EmptyRatings);
    }
    let index = |x: u8| {
        categories.iter().position(|c| *c == x).ok_or(StudyError::ScoreOutOfRange { value: x })
    };
    let k = categories.len();
    let mut observed = vec![0u64; k * k];
    let mut rows = vec![0u64; k];
    let mut cols = vec![0u64; k];
    for (x, y) in a.iter().zip(b) {
        let (i, j) = (index(*x)?, index(*y)?);
        observed[i * k + j] += 1;
        rows[i] += 1;
        cols[j] += 1;
    }
    let n = a.len() as u64;
    let mut weighted_observed = 0u64;
    let mut weighted_expected = 0u64;
    for i in 0..k {
        for j in 0..k {
            let w = weight(weighting, i, j);
            weighted_observed += w * observed[i * k + j];
            weighted_expected += w * rows[i] * cols[j];
        }
    }
    if weighted_expected == 0 {
        let agree: u64 = (0..k).map(|i| observed[i * k + i]).sum();
        return Ok(KappaValue::Undefined { observed_agreement: agree as f64 / n as f64 });
    }
    let kappa = 1.0 - (n as f64 * weighted_observed as f64) / weighted_expected as f64;
    Ok(KappaValue::Defined { kappa })
}
