//! The blinded rater study: rubric, assignment, packets, scores and agreement.

mod agreement;
mod kappa;
mod packets;
mod plan;
mod rubric;
mod scores;
mod summary;

pub use agreement::{
    agreement_matrices, delta_matrix, rater_pairs, write_agreement_csv, AgreementMatrix, AgreementReport,
    AgreementValue, DeltaEntry, DeltaMatrix, PairEntry,
};
pub use kappa::{kappa, KappaValue, Weighting, RUBRIC_CATEGORIES};
pub use packets::{audit_blinding, blind_export, redact, GradingPacket, Redactor, REDACTION};
pub use plan::{build_assignments, AssignmentPlan, PublicPlan, SealedEntry, SealedMap, StudyDesign};
pub use rubric::{rubric_text, Question, RubricQuestion, MAX_SCORE, MIN_SCORE, RUBRIC, RUBRIC_TITLE};
pub use scores::{
    check_entry, ingest_scores, latest_entries, read_scores_csv, write_scores_csv, Completeness, RubricScoreEntry,
    ScoreRow, ScoreTable, SCORE_COLUMNS,
};
pub use summary::{
    cross_rater_average, fmt3, mean, summarize_scores, write_summary_csv, ModelAverage, StudySummary, SummaryCell,
};

use crate::stats::StatsError;

#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error("case set has {got} cases but the design needs {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("invalid study design: {0}")]
    InvalidDesign(String),
    #[error("case `{0}` appears twice in the case set")]
    DuplicateCase(String),
    #[error("case `{0}` is not in the manifest")]
    UnknownCase(String),
    #[error("no dialogue for case `{case_id}` from model `{model_id}`")]
    MissingDialogue { case_id: String, model_id: String },
    #[error("packet `{packet_id}` would reveal a model identifier")]
    BlindingViolation { packet_id: String },
    #[error("unknown packet `{0}`")]
    UnknownPacket(String),
    #[error("packet `{packet_id}` is not assigned to rater `{rater_id}`")]
    RaterMismatch { rater_id: String, packet_id: String },
    #[error("score {value} outside 1-5")]
    ScoreOutOfRange { value: u8 },
    #[error("ratings are not paired ({0} vs {1})")]
    Unpaired(usize, usize),
    #[error("no ratings")]
    EmptyRatings,
    #[error("score table is empty")]
    EmptyTable,
    #[error("scores csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl From<csv::Error> for StudyError {
    fn from(e: csv::Error) -> Self {
        StudyError::Csv { line: e.position().map_or(0, |p| p.line() as usize), message: e.to_string() }
    }
}
