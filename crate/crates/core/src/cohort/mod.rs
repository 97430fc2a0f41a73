//! Labeled image manifests and participant-level cohort operations.
//!
//! A manifest is line-delimited JSON, one object per image. Participants are
//! the leakage boundary: every split and sample treats a participant's images
//! as one unit where that matters.

mod sample;
mod split;
mod summary;
pub mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::labels::{ExamLabels, Task};
use crate::provenance::sha256_hex;

pub use sample::{stratified_sample, CaseSet, StratumAllocation, StratumKey};
pub use split::{split_by_participant, SplitManifest, SplitProvenance, SplitRatios};
pub use summary::{format_count_percent, label_summary, ClassCount, DistributionTable, TaskDistribution};

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("failed to read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate image_id `{image_id}` (first seen on line {first_line})")]
    DuplicateImage { line: usize, image_id: String, first_line: usize },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid sample request: {0}")]
    InvalidSample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eye {
    Left,
    Right,
}

/// Visit identifier; AREDS uses ordinal visit numbers but free-form labels are accepted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Visit {
    Ordinal(u32),
    Label(String),
}

impl fmt::Display for Visit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Visit::Ordinal(n) => write!(f, "{n}"),
            Visit::Label(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    /// 0 = female, 1 = male.
    pub sex: u8,
    /// 0 = no, 1 = yes.
    pub diabetes: u8,
    /// 1 = current, 2 = former, 3 = never.
    pub smoking: u8,
}

impl Demographics {
    fn check(&self) -> Result<(), String> {
        if self.sex > 1 {
            return Err(format!("sex code {} not in {{0, 1}}", self.sex));
        }
        if self.diabetes > 1 {
            return Err(format!("diabetes code {} not in {{0, 1}}", self.diabetes));
        }
        if !(1..=3).contains(&self.smoking) {
            return Err(format!("smoking code {} not in {{1, 2, 3}}", self.smoking));
        }
        Ok(())
    }
}

/// One fundus image with its participant, metadata and ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageCaseRecord {
    pub image_id: String,
    pub participant_id: String,
    pub eye: Eye,
    pub visit: Visit,
    pub image_path: String,
    pub demographics: Demographics,
    pub labels: ExamLabels,
}

/// Flat wire form of a manifest line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    image_id: String,
    participant_id: String,
    eye: Eye,
    visit: Visit,
    image_path: String,
    age: u32,
    sex: u8,
    diabetes: u8,
    smoking: u8,
    advamd: u8,
    pig: u8,
    drus: u8,
}

impl From<&ImageCaseRecord> for ManifestLine {
    fn from(r: &ImageCaseRecord) -> Self {
        ManifestLine {
            image_id: r.image_id.clone(),
            participant_id: r.participant_id.clone(),
            eye: r.eye,
            visit: r.visit.clone(),
            image_path: r.image_path.clone(),
            age: r.demographics.age,
            sex: r.demographics.sex,
            diabetes: r.demographics.diabetes,
            smoking: r.demographics.smoking,
            advamd: r.labels.advamd,
            pig: r.labels.pig,
            drus: r.labels.drus,
        }
    }
}

impl TryFrom<ManifestLine> for ImageCaseRecord {
    type Error = String;

    fn try_from(l: ManifestLine) -> Result<Self, Self::Error> {
        if l.image_id.trim().is_empty() {
            return Err("image_id is empty".into());
        }
        if l.participant_id.trim().is_empty() {
            return Err("participant_id is empty".into());
        }
        let demographics =
            Demographics { age: l.age, sex: l.sex, diabetes: l.diabetes, smoking: l.smoking };
        demographics.check()?;
        let labels = ExamLabels::new(l.advamd, l.pig, l.drus).map_err(|e| e.to_string())?;
        Ok(ImageCaseRecord {
            image_id: l.image_id,
            participant_id: l.participant_id,
            eye: l.eye,
            visit: l.visit,
            image_path: l.image_path,
            demographics,
            labels,
        })
    }
}

impl ImageCaseRecord {
    /// Serializes the record as one manifest line (no trailing newline).
    pub fn to_manifest_line(&self) -> String {
        serde_json::to_string(&ManifestLine::from(self)).expect("manifest line serializes")
    }

    pub fn from_manifest_line(line: &str) -> Result<Self, String> {
        let raw: ManifestLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        raw.try_into()
    }
}

/// All records of a manifest, in file order, indexed by image id.
#[derive(Debug, Clone, Default)]
pub struct CohortManifest {
    records: Vec<ImageCaseRecord>,
    index: HashMap<String, usize>,
    digest: String,
}

impl CohortManifest {
    /// Builds a manifest from in-memory records, rejecting duplicate ids.
    pub fn from_records(records: Vec<ImageCaseRecord>) -> Result<Self, CohortError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.participant_id.trim().is_empty() {
                return Err(CohortError::Schema {
                    line: i + 1,
                    message: "participant_id is empty".into(),
                });
            }
            if let Some(first) = index.insert(r.image_id.clone(), i) {
                return Err(CohortError::DuplicateImage {
                    line: i + 1,
                    image_id: r.image_id.clone(),
                    first_line: first + 1,
                });
            }
        }
        let mut canonical = String::new();
        for r in &records {
            canonical.push_str(&r.to_manifest_line());
            canonical.push('\n');
        }
        Ok(CohortManifest { records, index, digest: sha256_hex(canonical) })
    }

    pub fn records(&self) -> &[ImageCaseRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageCaseRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    /// SHA-256 over the canonical serialization of all records.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Distinct participant ids in first-appearance order.
    pub fn participants(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.participant_id.as_str()))
            .map(|r| r.participant_id.as_str())
            .collect()
    }

    /// Sub-manifest of the records whose participant is in `participants`.
    pub fn restrict_to_participants(&self, participants: &HashSet<String>) -> CohortManifest {
        let records = self
            .records
            .iter()
            .filter(|r| participants.contains(&r.participant_id))
            .cloned()
            .collect();
        CohortManifest::from_records(records).expect("subset of a valid manifest is valid")
    }

    /// Sub-manifest of the given image ids, kept in manifest order.
    pub fn restrict_to_images<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> CohortManifest {
        let wanted: HashSet<&str> = ids.into_iter().collect();
        let records = self
            .records
            .iter()
            .filter(|r| wanted.contains(r.image_id.as_str()))
            .cloned()
            .collect();
        CohortManifest::from_records(records).expect("subset of a valid manifest is valid")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_manifest_line());
            out.push('\n');
        }
        out
    }

    /// Ground-truth value for a task, if the image is known.
    pub fn truth(&self, image_id: &str, task: Task) -> Option<u8> {
        self.get(image_id).map(|r| r.labels.get(task))
    }
}

/// Parses manifest lines from any reader. Blank lines are skipped.
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<CohortManifest, CohortError> {
    let mut records = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CohortError::Schema { line: lineno, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = ImageCaseRecord::from_manifest_line(&line)
            .map_err(|message| CohortError::Schema { line: lineno, message })?;
        if let Some(&first) = first_line.get(&record.image_id) {
            return Err(CohortError::DuplicateImage {
                line: lineno,
                image_id: record.image_id,
                first_line: first,
            });
        }
        first_line.insert(record.image_id.clone(), lineno);
        records.push(record);
    }
    CohortManifest::from_records(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CohortManifest, CohortError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|source| CohortError::Io { path: path.to_path_buf(), source })?;
    parse_manifest(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, pid: &str) -> String {
        format!(
            r#"{{"image_id":"{id}","participant_id":"{pid}","eye":"left","visit":0,"image_path":"img/{id}.jpg","age":69,"sex":0,"diabetes":0,"smoking":3,"advamd":0,"pig":0,"drus":1}}"#
        )
    }

    #[test]
    fn empty_input_gives_empty_manifest() {
        let m = parse_manifest("".as_bytes()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn duplicate_image_is_rejected_with_line() {
        let text = [line("a", "p1"), line("b", "p1"), line("a", "p2")].join("\n");
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        match err {
            CohortError::DuplicateImage { line, image_id, first_line } => {
                assert_eq!(line, 3);
                assert_eq!(first_line, 1);
                assert_eq!(image_id, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_manifest(text.as_bytes()).unwrap_err().to_string().contains("line 3"));
    }

    #[test]
    fn schema_violations_name_the_line() {
        let bad_code = line("a", "p1").replace(r#""smoking":3"#, r#""smoking":4"#);
        let text = format!("{}\n{}", line("z", "p0"), bad_code);
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert!(matches!(err, CohortError::Schema { line: 2, .. }), "{err}");

        let empty_pid = line("a", "");
        assert!(matches!(
            parse_manifest(empty_pid.as_bytes()).unwrap_err(),
            CohortError::Schema { line: 1, .. }
        ));

        let drus3 = line("a", "p").replace(r#""drus":1"#, r#""drus":3"#);
        assert!(parse_manifest(drus3.as_bytes()).is_err());
        assert!(parse_manifest("{not json".as_bytes()).is_err());
    }

    #[test]
    fn visit_accepts_labels() {
        let text = line("a", "p").replace(r#""visit":0"#, r#""visit":"baseline""#);
        let m = parse_manifest(text.as_bytes()).unwrap();
        assert_eq!(m.records()[0].visit, Visit::Label("baseline".into()));
    }

    #[test]
    fn line_round_trip() {
        let m = parse_manifest(line("a", "p").as_bytes()).unwrap();
        let again = ImageCaseRecord::from_manifest_line(&m.records()[0].to_manifest_line()).unwrap();
        assert_eq!(again, m.records()[0]);
    }
}
