#![allow(dead_code)]

use std::path::Path;

use oculobench_core::cohort::synthetic::{simple_manifest, SyntheticCase};
use oculobench_core::cohort::CohortManifest;
use oculobench_core::inference::InferenceCase;
use oculobench_core::provenance::seeded_rng;
use oculobench_core::ExamLabels;
use rand::Rng;

pub const JSON_DIALOGUE: &str = include_str!("../fixtures/json_dialogue.txt");
pub const PARSER_CORPUS: &str = include_str!("../fixtures/parser_corpus.jsonl");

/// `n` cases, two images per participant, labels drawn from `seed`.
pub fn labelled_manifest(n: usize, seed: u64) -> CohortManifest {
    let mut rng = seeded_rng(seed);
    let cases: Vec<SyntheticCase> = (0..n)
        .map(|i| {
            let labels = ExamLabels {
                advamd: rng.random_range(0..2),
                pig: rng.random_range(0..2),
                drus: rng.random_range(0..3),
            };
            SyntheticCase::new(format!("IMG{i:05}"), format!("P{:05}", i / 2)).with_labels(labels)
        })
        .collect();
    simple_manifest(&cases)
}

/// Writes a small distinct placeholder file for every image in the manifest.
pub fn write_images(manifest: &CohortManifest, base: &Path) -> Vec<InferenceCase> {
    std::fs::create_dir_all(base.join("images")).unwrap();
    manifest
        .records()
        .iter()
        .map(|r| {
            std::fs::write(base.join(&r.image_path), format!("jpeg:{}", r.image_id)).unwrap();
            InferenceCase::from_record(r, base)
        })
        .collect()
}
