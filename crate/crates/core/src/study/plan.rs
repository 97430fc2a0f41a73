//! Rater assignment plans and the sealed packet map.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StudyError;
use crate::provenance::seeded_rng;

/// Study shape: every rater grades the common cases plus their own unique cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub raters: usize,
    pub common_n: usize,
    pub unique_n: usize,
}

impl Default for StudyDesign {
    fn default() -> Self {
        StudyDesign { raters: 3, common_n: 30, unique_n: 30 }
    }
}

impl StudyDesign {
    pub fn total_cases(&self) -> usize {
        self.common_n + self.raters * self.unique_n
    }

    pub fn cases_per_rater(&self) -> usize {
        self.common_n + self.unique_n
    }

    pub fn rater_ids(&self) -> Vec<String> {
        (1..=self.raters).map(|i| format!("R{i}")).collect()
    }
}

/// Model and case behind one packet. Never shipped with packets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedEntry {
    pub case_id: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedMap {
    pub models: Vec<String>,
    pub packets: BTreeMap<String, SealedEntry>,
}

/// The part of a plan that may be shown to raters and the grading service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicPlan {
    pub seed: u64,
    pub design: StudyDesign,
    pub raters: Vec<String>,
    pub case_set: Vec<String>,
    pub common: Vec<String>,
    pub unique: BTreeMap<String, Vec<String>>,
    /// Packets per rater in presentation order.
    pub queues: BTreeMap<String, Vec<String>>,
}

impl PublicPlan {
    pub fn queue(&self, rater_id: &str) -> Option<&[String]> {
        self.queues.get(rater_id).map(Vec::as_slice)
    }

    pub fn is_assigned(&self, rater_id: &str, packet_id: &str) -> bool {
        self.queue(rater_id).is_some_and(|q| q.iter().any(|p| p == packet_id))
    }

    pub fn knows_packet(&self, packet_id: &str) -> bool {
        self.queues.values().any(|q| q.iter().any(|p| p == packet_id))
    }

    /// Cases a rater grades: the common set plus their unique set.
    pub fn rater_cases(&self, rater_id: &str) -> Vec<String> {
        let mut out = self.common.clone();
        if let Some(u) = self.unique.get(rater_id) {
            out.extend(u.iter().cloned());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub public: PublicPlan,
    pub sealed: SealedMap,
}

impl AssignmentPlan {
    pub fn models(&self) -> &[String] {
        &self.sealed.models
    }

    pub fn packet(&self, packet_id: &str) -> Option<&SealedEntry> {
        self.sealed.packets.get(packet_id)
    }

    /// Packet id for a (case, model) pair.
    pub fn packet_for(&self, case_id: &str, model_id: &str) -> Option<&str> {
        self.sealed
            .packets
            .iter()
            .find(|(_, e)| e.case_id == case_id && e.model_id == model_id)
            .map(|(p, _)| p.as_str())
    }

    /// Structural invariants; `Err` names the first violation.
    pub fn check(&self) -> Result<(), String> {
        let p = &self.public;
        let d = p.design;
        if p.case_set.len() != d.total_cases() || p.common.len() != d.common_n {
            return Err("case counts differ from the design".into());
        }
        let mut seen: BTreeSet<&str> = p.common.iter().map(String::as_str).collect();
        for r in &p.raters {
            let u = p.unique.get(r).ok_or(format!("rater {r} has no unique set"))?;
            if u.len() != d.unique_n {
                return Err(format!("rater {r} has {} unique cases", u.len()));
            }
            for c in u {
                if !seen.insert(c) {
                    return Err(format!("case {c} assigned twice"));
                }
            }
            let q = p.queue(r).ok_or(format!("rater {r} has no queue"))?;
            if q.len() != d.cases_per_rater() * self.sealed.models.len() {
                return Err(format!("rater {r} queue has {} packets", q.len()));
            }
            let cases: BTreeSet<&str> = q.iter().filter_map(|id| self.packet(id)).map(|e| e.case_id.as_str()).collect();
            let expected: BTreeSet<String> = p.rater_cases(r).into_iter().collect();
            if cases.len() != expected.len() || !cases.iter().all(|c| expected.contains(*c)) {
                return Err(format!("rater {r} queue covers the wrong cases"));
            }
        }
        if seen.len() != p.case_set.len() {
            return Err("common and unique sets do not cover the case set".into());
        }
        if self.sealed.packets.len() != p.case_set.len() * self.sealed.models.len() {
            return Err("packet count differs from cases x models".into());
        }
        for (id, e) in &self.sealed.packets {
            let lower = id.to_lowercase();
            if self.sealed.models.iter().any(|m| lower.contains(&m.to_lowercase())) {
                return Err(format!("packet id {id} contains a model id"));
            }
            if e.case_id.is_empty() {
                return Err(format!("packet {id} has no case"));
            }
        }
        Ok(())
    }
}

const MAX_TOKEN_DRAWS: usize = 10_000;

fn draw_token<R: Rng>(rng: &mut R, taken: &HashSet<String>, forbidden: &[String]) -> Result<String, StudyError> {
    for _ in 0..MAX_TOKEN_DRAWS {
        let token = format!("{:016x}", rng.random::<u64>());
        if !taken.contains(&token) && !forbidden.iter().any(|f| token.contains(f.as_str())) {
            return Ok(token);
        }
    }
    Err(StudyError::InvalidDesign("could not draw packet ids free of model and case identifiers".into()))
}

/// Seeded partition of `case_set` into common and per-rater unique cases, with
/// one opaque packet per (case, model) and a shuffled queue per rater.
pub fn build_assignments(
    case_set: &[String],
    design: StudyDesign,
    models: &[String],
    seed: u64,
) -> Result<AssignmentPlan, StudyError> {
    if case_set.len() != design.total_cases() {
        return Err(StudyError::SizeMismatch { expected: design.total_cases(), got: case_set.len() });
    }
    if design.raters == 0 {
        return Err(StudyError::InvalidDesign("at least one rater is required".into()));
    }
    let model_set: BTreeSet<&String> = models.iter().collect();
    if models.is_empty() || model_set.len() != models.len() || models.iter().any(|m| m.is_empty()) {
        return Err(StudyError::InvalidDesign("models must be non-empty and distinct".into()));
    }
    let mut cases = case_set.to_vec();
    cases.sort();
    if let Some(w) = cases.windows(2).find(|w| w[0] == w[1]) {
        return Err(StudyError::DuplicateCase(w[0].clone()));
    }

    let mut rng = seeded_rng(seed);
    let mut shuffled = cases.clone();
    shuffled.shuffle(&mut rng);
    let mut common = shuffled[..design.common_n].to_vec();
    common.sort();
    let raters = design.rater_ids();
    let mut unique = BTreeMap::new();
    for (i, r) in raters.iter().enumerate() {
        let start = design.common_n + i * design.unique_n;
        let mut u = shuffled[start..start + design.unique_n].to_vec();
        u.sort();
        unique.insert(r.clone(), u);
    }

    let forbidden: Vec<String> = models.iter().map(|m| m.to_lowercase()).collect();
    let mut taken = HashSet::new();
    let mut packets = BTreeMap::new();
    let mut by_pair = BTreeMap::new();
    for case in &cases {
        for model in models {
            let token = draw_token(&mut rng, &taken, &forbidden)?;
            taken.insert(token.clone());
            by_pair.insert((case.clone(), model.clone()), token.clone());
            packets.insert(token, SealedEntry { case_id: case.clone(), model_id: model.clone() });
        }
    }

    let mut queues = BTreeMap::new();
    for r in &raters {
        let mut rater_cases = common.clone();
        rater_cases.extend(unique[r].iter().cloned());
        rater_cases.shuffle(&mut rng);
        let mut queue = Vec::with_capacity(rater_cases.len() * models.len());
        for case in &rater_cases {
            let mut order = models.to_vec();
            order.shuffle(&mut rng);
            queue.extend(order.iter().map(|m| by_pair[&(case.clone(), m.clone())].clone()));
        }
        queues.insert(r.clone(), queue);
    }

    Ok(AssignmentPlan {
        public: PublicPlan { seed, design, raters, case_set: cases, common, unique, queues },
        sealed: SealedMap { models: models.to_vec(), packets },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("IMG{i:04}")).collect()
    }

    fn models() -> Vec<String> {
        vec!["qwen".into(), "ocularchat".into()]
    }

    #[test]
    fn default_study_shape() {
        let plan = build_assignments(&ids(120), StudyDesign::default(), &models(), 7).unwrap();
        plan.check().unwrap();
        assert_eq!(plan.sealed.packets.len(), 240);
        for r in &plan.public.raters {
            assert_eq!(plan.public.queue(r).unwrap().len(), 120);
            assert_eq!(plan.public.rater_cases(r).len(), 60);
        }
    }

    #[test]
    fn degenerate_single_rater() {
        let design = StudyDesign { raters: 1, common_n: 0, unique_n: 30 };
        let plan = build_assignments(&ids(30), design, &models(), 1).unwrap();
        plan.check().unwrap();
        assert_eq!(plan.public.unique["R1"].len(), 30);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = build_assignments(&ids(120), StudyDesign::default(), &models(), 3).unwrap();
        assert_eq!(a, build_assignments(&ids(120), StudyDesign::default(), &models(), 3).unwrap());
        assert_ne!(a, build_assignments(&ids(120), StudyDesign::default(), &models(), 4).unwrap());
    }

    #[test]
    fn size_mismatch() {
        assert!(matches!(
            build_assignments(&ids(119), StudyDesign::default(), &models(), 1),
            Err(StudyError::SizeMismatch { expected: 120, got: 119 })
        ));
    }

    #[test]
    fn hex_like_model_ids_are_avoided() {
        let models = vec!["a".to_string(), "b".to_string()];
        let design = StudyDesign { raters: 1, common_n: 0, unique_n: 2 };
        let plan = build_assignments(&ids(2), design, &models, 1).unwrap();
        assert!(plan.sealed.packets.keys().all(|k| !k.contains('a') && !k.contains('b')));
    }
}
