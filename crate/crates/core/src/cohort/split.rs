use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::sample::apportion;
use super::{CohortError, CohortManifest};
use crate::provenance::seeded_rng;

pub const TRAIN: &str = "train";
pub const VAL: &str = "val";
pub const TEST: &str = "test";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, CohortError> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    /// Train/test only, the layout reported for the AREDS cohort.
    pub fn train_test(train: f64) -> Result<Self, CohortError> {
        Self::new(train, 0.0, 1.0 - train)
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CohortError::InvalidRatios(format!(
                "ratios must be finite and nonnegative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(CohortError::InvalidRatios(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

impl std::str::FromStr for SplitRatios {
    type Err = CohortError;

    /// Parses `train,val,test`, e.g. `0.78,0,0.22`, or `train,test` with no validation split.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CohortError::InvalidRatios(format!("`{s}`: {e}")))?;
        match parts.as_slice() {
            [train, val, test] => SplitRatios::new(*train, *val, *test),
            [train, test] => SplitRatios::new(*train, 0.0, *test),
            _ => Err(CohortError::InvalidRatios(format!("`{s}`: expected two or three comma-separated fractions"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub source_digest: String,
    pub seed: u64,
    pub ratios: SplitRatios,
}

/// Participant sets per split. Sets are pairwise disjoint by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub splits: BTreeMap<String, BTreeSet<String>>,
    pub provenance: SplitProvenance,
}

impl SplitManifest {
    pub fn participants(&self, split: &str) -> Option<&BTreeSet<String>> {
        self.splits.get(split)
    }

    pub fn split_of(&self, participant_id: &str) -> Option<&str> {
        self.splits
            .iter()
            .find(|(_, members)| members.contains(participant_id))
            .map(|(name, _)| name.as_str())
    }

    /// Images per split in `manifest`.
    pub fn image_counts(&self, manifest: &CohortManifest) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            self.splits.keys().map(|k| (k.clone(), 0)).collect();
        for r in manifest.records() {
            if let Some(name) = self.split_of(&r.participant_id) {
                *counts.get_mut(name).expect("split present") += 1;
            }
        }
        counts
    }

    /// The records of one split as a standalone manifest.
    pub fn subset(&self, manifest: &CohortManifest, split: &str) -> Option<CohortManifest> {
        let members: HashSet<String> = self.splits.get(split)?.iter().cloned().collect();
        Some(manifest.restrict_to_participants(&members))
    }
}

/// Assigns whole participants to train/val/test.
///
/// Participants are sorted, shuffled with the seed, and filled greedily into
/// targets obtained by largest-remainder rounding of `ratio * participants`.
pub fn split_by_participant(
    manifest: &CohortManifest,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitManifest, CohortError> {
    ratios.validate()?;
    if manifest.is_empty() {
        return Err(CohortError::EmptyManifest);
    }
    let mut participants: Vec<&str> = manifest.participants();
    participants.sort_unstable();
    let mut rng = seeded_rng(seed);
    participants.shuffle(&mut rng);

    let total = participants.len();
    let quotas = [ratios.train, ratios.val, ratios.test].map(|r| r * total as f64);
    let targets = apportion(&quotas, total);

    let mut splits = BTreeMap::new();
    let mut cursor = 0;
    for (name, target) in [TRAIN, VAL, TEST].into_iter().zip(targets) {
        let members: BTreeSet<String> =
            participants[cursor..cursor + target].iter().map(|p| p.to_string()).collect();
        cursor += target;
        splits.insert(name.to_string(), members);
    }

    Ok(SplitManifest {
        splits,
        provenance: SplitProvenance { source_digest: manifest.digest().to_string(), seed, ratios },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::synthetic::{simple_manifest, SyntheticCase};

    #[test]
    fn single_participant_is_atomic() {
        let cases: Vec<SyntheticCase> = (0..10).map(|i| SyntheticCase::new(format!("i{i}"), "p0")).collect();
        let m = simple_manifest(&cases);
        let s = split_by_participant(&m, SplitRatios::new(0.5, 0.0, 0.5).unwrap(), 3).unwrap();
        let counts = s.image_counts(&m);
        let nonzero: Vec<_> = counts.values().filter(|&&c| c > 0).collect();
        assert_eq!(nonzero, vec![&10]);
    }

    #[test]
    fn deterministic_for_seed() {
        let cases: Vec<SyntheticCase> =
            (0..50).map(|i| SyntheticCase::new(format!("i{i}"), format!("p{}", i % 17))).collect();
        let m = simple_manifest(&cases);
        let r = SplitRatios::new(0.6, 0.2, 0.2).unwrap();
        assert_eq!(split_by_participant(&m, r, 9).unwrap(), split_by_participant(&m, r, 9).unwrap());
        assert_ne!(split_by_participant(&m, r, 9).unwrap(), split_by_participant(&m, r, 10).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SplitRatios::new(0.5, 0.5, 0.5).is_err());
        assert!(SplitRatios::new(-0.1, 0.6, 0.5).is_err());
        assert!("0.78,0,0.22".parse::<SplitRatios>().is_ok());
        assert_eq!("0.78,0.22".parse::<SplitRatios>().unwrap().val, 0.0);
        assert!("1".parse::<SplitRatios>().is_err());
        let empty = CohortManifest::default();
        assert!(matches!(
            split_by_participant(&empty, SplitRatios::train_test(0.8).unwrap(), 1),
            Err(CohortError::EmptyManifest)
        ));
    }
}
