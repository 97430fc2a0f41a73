//! Seeded inputs shared by the benchmarks.

use oculobench_core::parser::canonical_answer;
use oculobench_core::provenance::seeded_rng;
use oculobench_core::stats::TaskOutcomes;
use oculobench_core::{ExamLabels, Task};
use rand::Rng;

/// Paired outcomes for two models on `n` DRUS cases, right with probability `pa` and `pb`.
pub fn paired_outcomes(n: usize, pa: f64, pb: f64, seed: u64) -> (TaskOutcomes, TaskOutcomes) {
    let mut rng = seeded_rng(seed);
    let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..3)).collect();
    let mut answer = |p: f64| -> Vec<Option<u8>> {
        truth.iter().map(|&t| Some(if rng.random_bool(p) { t } else { (t + 1) % 3 })).collect()
    };
    let a = answer(pa);
    let b = answer(pb);
    (
        TaskOutcomes::from_vectors(Task::Drus, truth.clone(), a).expect("aligned"),
        TaskOutcomes::from_vectors(Task::Drus, truth, b).expect("aligned"),
    )
}

/// Two raters' 1-5 scores that agree most of the time.
pub fn ratings(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = seeded_rng(seed);
    let a: Vec<u8> = (0..n).map(|_| rng.random_range(1..=5)).collect();
    let b = a.iter().map(|&s| if rng.random_bool(0.7) { s } else { rng.random_range(1..=5) }).collect();
    (a, b)
}

/// Model replies in the shapes the parser meets: canonical, fenced, chatty, repaired.
pub fn responses() -> Vec<String> {
    let l = ExamLabels { advamd: 0, pig: 1, drus: 2 };
    vec![
        canonical_answer(&l),
        format!("Here is my assessment.\n```json\n{}\n```\nLet me know if you need more.", canonical_answer(&l)),
        "Based on the image: {'Advanced AMD': 'no', 'pigment': 'yes', 'drusen size': 'large',}".to_string(),
        format!("{} Draft: {{\"ADVAMD\": 1}} ... final answer: {}", "reasoning ".repeat(40), canonical_answer(&l)),
        "I cannot determine the findings from this photograph.".to_string(),
    ]
}
