//! Rubric score entries, ingestion and completeness.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::plan::{AssignmentPlan, PublicPlan};
use super::rubric::{Question, MAX_SCORE, MIN_SCORE};
use super::StudyError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricScoreEntry {
    pub packet_id: String,
    pub rater_id: String,
    pub q1: u8,
    pub q2: u8,
    pub q3: u8,
    pub q4: u8,
    pub timestamp: DateTime<Utc>,
}

impl RubricScoreEntry {
    pub fn scores(&self) -> [u8; 4] {
        [self.q1, self.q2, self.q3, self.q4]
    }

    pub fn score(&self, q: Question) -> u8 {
        self.scores()[q.index()]
    }
}

/// Range and assignment checks for one entry.
pub fn check_entry(plan: &PublicPlan, entry: &RubricScoreEntry) -> Result<(), StudyError> {
    if let Some(bad) = entry.scores().into_iter().find(|s| !(MIN_SCORE..=MAX_SCORE).contains(s)) {
        return Err(StudyError::ScoreOutOfRange { value: bad });
    }
    if !plan.knows_packet(&entry.packet_id) {
        return Err(StudyError::UnknownPacket(entry.packet_id.clone()));
    }
    if !plan.is_assigned(&entry.rater_id, &entry.packet_id) {
        return Err(StudyError::RaterMismatch { rater_id: entry.rater_id.clone(), packet_id: entry.packet_id.clone() });
    }
    Ok(())
}

/// Keeps the latest entry per (packet, rater); on equal timestamps the later one in input order wins.
pub fn latest_entries(entries: &[RubricScoreEntry]) -> BTreeMap<(String, String), RubricScoreEntry> {
    let mut latest: BTreeMap<(String, String), RubricScoreEntry> = BTreeMap::new();
    for e in entries {
        let key = (e.rater_id.clone(), e.packet_id.clone());
        match latest.get(&key) {
            Some(prev) if prev.timestamp > e.timestamp => {}
            _ => {
                latest.insert(key, e.clone());
            }
        }
    }
    latest
}

/// A score joined with the unsealed case and model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub rater_id: String,
    pub packet_id: String,
    pub case_id: String,
    pub model_id: String,
    pub q1: u8,
    pub q2: u8,
    pub q3: u8,
    pub q4: u8,
    pub timestamp: DateTime<Utc>,
}

impl ScoreRow {
    pub fn score(&self, q: Question) -> u8 {
        [self.q1, self.q2, self.q3, self.q4][q.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completeness {
    pub rater_id: String,
    pub assigned: usize,
    pub scored: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub models: Vec<String>,
    pub rows: Vec<ScoreRow>,
    pub completeness: Vec<Completeness>,
}

impl ScoreTable {
    pub fn lookup(&self, rater_id: &str, case_id: &str, model_id: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.rater_id == rater_id && r.case_id == case_id && r.model_id == model_id)
    }

    pub fn raters(&self) -> Vec<String> {
        self.completeness.iter().map(|c| c.rater_id.clone()).collect()
    }
}

/// Validates entries, resolves resubmissions and joins model identity.
pub fn ingest_scores(plan: &AssignmentPlan, entries: &[RubricScoreEntry]) -> Result<ScoreTable, StudyError> {
    for e in entries {
        check_entry(&plan.public, e)?;
    }
    let rows: Vec<ScoreRow> = latest_entries(entries)
        .into_values()
        .map(|e| {
            let sealed = plan.packet(&e.packet_id).expect("checked against plan");
            ScoreRow {
                case_id: sealed.case_id.clone(),
                model_id: sealed.model_id.clone(),
                rater_id: e.rater_id,
                packet_id: e.packet_id,
                q1: e.q1,
                q2: e.q2,
                q3: e.q3,
                q4: e.q4,
                timestamp: e.timestamp,
            }
        })
        .collect();
    let completeness = plan
        .public
        .raters
        .iter()
        .map(|r| {
            let assigned = plan.public.queue(r).map_or(0, <[String]>::len);
            let scored = rows.iter().filter(|row| &row.rater_id == r).count();
            let percent = if assigned == 0 { 0.0 } else { 100.0 * scored as f64 / assigned as f64 };
            Completeness { rater_id: r.clone(), assigned, scored, percent }
        })
        .collect();
    Ok(ScoreTable { models: plan.models().to_vec(), rows, completeness })
}

pub const SCORE_COLUMNS: [&str; 7] = ["packet_id", "rater_id", "q1", "q2", "q3", "q4", "timestamp"];

pub fn read_scores_csv<R: Read>(reader: R) -> Result<Vec<RubricScoreEntry>, StudyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e: csv::Error| StudyError::Csv { line: i + 2, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_scores_csv<W: Write>(out: W, entries: &[RubricScoreEntry]) -> Result<(), StudyError> {
    let mut w = csv::Writer::from_writer(out);
    for e in entries {
        w.serialize(e).map_err(|e| StudyError::Csv { line: 0, message: e.to_string() })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::plan::{build_assignments, StudyDesign};

    fn plan() -> AssignmentPlan {
        let cases: Vec<String> = (0..120).map(|i| format!("C{i:03}")).collect();
        build_assignments(&cases, StudyDesign::default(), &["m1".to_string(), "m2".to_string()], 5).unwrap()
    }

    fn entry(packet: &str, rater: &str, q: [u8; 4], ts: &str) -> RubricScoreEntry {
        RubricScoreEntry {
            packet_id: packet.into(),
            rater_id: rater.into(),
            q1: q[0],
            q2: q[1],
            q3: q[2],
            q4: q[3],
            timestamp: ts.parse().unwrap(),
        }
    }

    #[test]
    fn empty_ingest() {
        let t = ingest_scores(&plan(), &[]).unwrap();
        assert!(t.rows.is_empty());
        assert!(t.completeness.iter().all(|c| c.percent == 0.0 && c.assigned == 120));
    }

    #[test]
    fn full_study_is_complete() {
        let p = plan();
        let mut entries = Vec::new();
        for r in &p.public.raters {
            for pk in p.public.queue(r).unwrap() {
                entries.push(entry(pk, r, [3, 3, 4, 2], "2024-05-01T10:00:00Z"));
            }
        }
        let t = ingest_scores(&p, &entries).unwrap();
        assert_eq!(t.rows.len(), 360);
        assert!(t.completeness.iter().all(|c| c.percent == 100.0));
    }

    #[test]
    fn rejections() {
        let p = plan();
        let r1 = p.public.queue("R1").unwrap();
        let foreign = p.public.queue("R2").unwrap().iter().find(|pk| !r1.contains(pk)).unwrap().clone();
        let bad = entry(&foreign, "R1", [3, 3, 3, 3], "2024-05-01T10:00:00Z");
        assert!(matches!(ingest_scores(&p, &[bad]), Err(StudyError::RaterMismatch { .. })));
        let bad = entry("nope", "R1", [3, 3, 3, 3], "2024-05-01T10:00:00Z");
        assert!(matches!(ingest_scores(&p, &[bad]), Err(StudyError::UnknownPacket(_))));
        let bad = entry(&r1[0], "R1", [6, 3, 3, 3], "2024-05-01T10:00:00Z");
        assert!(matches!(ingest_scores(&p, &[bad]), Err(StudyError::ScoreOutOfRange { value: 6 })));
    }

    #[test]
    fn latest_timestamp_wins() {
        let p = plan();
        let pk = &p.public.queue("R1").unwrap()[0];
        let entries = vec![
            entry(pk, "R1", [4, 4, 4, 4], "2024-05-01T12:00:00Z"),
            entry(pk, "R1", [1, 1, 1, 1], "2024-05-01T11:00:00Z"),
            entry(pk, "R1", [2, 2, 2, 2], "2024-05-01T12:00:00Z"),
        ];
        let t = ingest_scores(&p, &entries).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].q1, 2);
        assert_eq!(t.rows[0].model_id, p.packet(pk).unwrap().model_id);
    }

    #[test]
    fn csv_round_trip() {
        let entries = vec![entry("abc", "R1", [3, 4, 2, 3], "2024-05-01T10:00:00Z")];
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &entries).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("packet_id,rater_id,q1,q2,q3,q4,timestamp\n"));
        assert_eq!(read_scores_csv(buf.as_slice()).unwrap(), entries);
        assert!(read_scores_csv("packet_id,rater_id,q1,q2,q3,q4,timestamp\nx,R1,a,1,1,1,2024-01-01T00:00:00Z\n".as_bytes()).is_err());
    }
}
