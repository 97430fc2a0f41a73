//! Synthetic manifests for tests, benchmarks and dry runs.
//!
//! [`areds_shaped_cohort`] reproduces the published AREDS cohort margins
//! (participant counts, image counts and per-task label counts for the train
//! and test partitions) with randomly arranged labels.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CohortManifest, Demographics, Eye, ImageCaseRecord, Visit};
use crate::labels::ExamLabels;
use crate::provenance::seeded_rng;

/// Minimal description of one synthetic image.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub image_id: String,
    pub participant_id: String,
    pub labels: ExamLabels,
    pub demographics: Demographics,
}

impl SyntheticCase {
    pub fn new(image_id: impl Into<String>, participant_id: impl Into<String>) -> Self {
        SyntheticCase {
            image_id: image_id.into(),
            participant_id: participant_id.into(),
            labels: ExamLabels { advamd: 0, pig: 0, drus: 1 },
            demographics: Demographics { age: 69, sex: 0, diabetes: 0, smoking: 3 },
        }
    }

    pub fn with_labels(mut self, labels: ExamLabels) -> Self {
        self.labels = labels;
        self
    }

    pub fn with_demographics(mut self, demographics: Demographics) -> Self {
        self.demographics = demographics;
        self
    }

    pub fn into_record(self) -> ImageCaseRecord {
        ImageCaseRecord {
            image_path: format!("images/{}.jpg", self.image_id),
            image_id: self.image_id,
            participant_id: self.participant_id,
            eye: Eye::Left,
            visit: Visit::Ordinal(0),
            demographics: self.demographics,
            labels: self.labels,
        }
    }
}

pub fn simple_manifest(cases: &[SyntheticCase]) -> CohortManifest {
    CohortManifest::from_records(cases.iter().cloned().map(SyntheticCase::into_record).collect())
        .expect("synthetic ids are unique")
}

/// Margins of one partition of the published cohort table.
#[derive(Debug, Clone, Copy)]
pub struct PartitionMargins {
    pub participants: usize,
    pub images: usize,
    pub advamd_yes: usize,
    pub pig_yes: usize,
    /// small/none, intermediate, large.
    pub drus: [usize; 3],
}

pub const AREDS_TRAIN: PartitionMargins = PartitionMargins {
    participants: 3_192,
    images: 46_167,
    advamd_yes: 5_712,
    pig_yes: 16_920,
    drus: [18_960, 12_496, 14_711],
};

pub const AREDS_TEST: PartitionMargins = PartitionMargins {
    participants: 915,
    images: 13_166,
    advamd_yes: 1_781,
    pig_yes: 4_891,
    drus: [5_140, 3_646, 4_380],
};

/// An AREDS-shaped manifest together with its designated partitions.
#[derive(Debug, Clone)]
pub struct AredsFixture {
    pub manifest: CohortManifest,
    pub train_participants: BTreeSet<String>,
    pub test_participants: BTreeSet<String>,
}

impl AredsFixture {
    pub fn train(&self) -> CohortManifest {
        self.manifest.restrict_to_participants(&self.train_participants.iter().cloned().collect())
    }

    pub fn test(&self) -> CohortManifest {
        self.manifest.restrict_to_participants(&self.test_participants.iter().cloned().collect())
    }
}

fn shuffled_codes<R: Rng>(counts: &[usize], rng: &mut R) -> Vec<u8> {
    let mut codes: Vec<u8> = counts
        .iter()
        .enumerate()
        .flat_map(|(code, &n)| std::iter::repeat_n(code as u8, n))
        .collect();
    codes.shuffle(rng);
    codes
}

fn partition_records<R: Rng>(
    margins: &PartitionMargins,
    participant_offset: usize,
    image_offset: usize,
    rng: &mut R,
) -> Vec<ImageCaseRecord> {
    let advamd = shuffled_codes(&[margins.images - margins.advamd_yes, margins.advamd_yes], rng);
    let pig = shuffled_codes(&[margins.images - margins.pig_yes, margins.pig_yes], rng);
    let drus = shuffled_codes(&margins.drus, rng);

    let base = margins.images / margins.participants;
    let extra = margins.images % margins.participants;
    let mut records = Vec::with_capacity(margins.images);
    let mut image = 0;
    for p in 0..margins.participants {
        let participant_id = format!("P{:05}", participant_offset + p + 1);
        let demographics = Demographics {
            age: rng.random_range(55..=81),
            sex: rng.random_range(0..=1),
            diabetes: u8::from(rng.random_bool(0.08)),
            smoking: rng.random_range(1..=3),
        };
        let n_images = base + usize::from(p < extra);
        for k in 0..n_images {
            let i = image;
            image += 1;
            let image_id = format!("IMG{:07}", image_offset + i + 1);
            records.push(ImageCaseRecord {
                image_path: format!("images/{image_id}.jpg"),
                image_id,
                participant_id: participant_id.clone(),
                eye: if k % 2 == 0 { Eye::Left } else { Eye::Right },
                visit: Visit::Ordinal((k / 2) as u32),
                demographics,
                labels: ExamLabels { advamd: advamd[i], pig: pig[i], drus: drus[i] },
            });
        }
    }
    records
}

/// 59,333 images from 4,107 participants with the published train/test margins.
pub fn areds_shaped_cohort(seed: u64) -> AredsFixture {
    let mut rng = seeded_rng(seed);
    let mut records = partition_records(&AREDS_TRAIN, 0, 0, &mut rng);
    let test = partition_records(&AREDS_TEST, AREDS_TRAIN.participants, AREDS_TRAIN.images, &mut rng);
    records.extend(test);
    let manifest = CohortManifest::from_records(records).expect("synthetic ids are unique");
    let train_participants = (1..=AREDS_TRAIN.participants).map(|p| format!("P{p:05}")).collect();
    let test_participants = (AREDS_TRAIN.participants + 1..=AREDS_TRAIN.participants + AREDS_TEST.participants)
        .map(|p| format!("P{p:05}"))
        .collect();
    AredsFixture { manifest, train_participants, test_participants }
}

/// Random manifest with uniformly drawn labels and 1..=`max_images` images per participant.
pub fn random_manifest(seed: u64, participants: usize, max_images: usize) -> CohortManifest {
    let mut rng = seeded_rng(seed);
    let mut cases = Vec::new();
    for p in 0..participants {
        let n = rng.random_range(1..=max_images.max(1));
        for k in 0..n {
            let labels = ExamLabels {
                advamd: rng.random_range(0..2),
                pig: rng.random_range(0..2),
                drus: rng.random_range(0..3),
            };
            cases.push(SyntheticCase::new(format!("p{p}-i{k}"), format!("p{p}")).with_labels(labels));
        }
    }
    simple_manifest(&cases)
}
