use std::collections::BTreeSet;

use oculobench_core::cohort::synthetic::random_manifest;
use oculobench_core::cohort::{split_by_participant, stratified_sample, SplitRatios};
use oculobench_core::parser::{canonical_answer, extract_labels};
use oculobench_core::stats::{clopper_pearson, mcnemar_exact_p, Discordant};
use oculobench_core::study::{build_assignments, kappa, KappaValue, StudyDesign, Weighting, RUBRIC_CATEGORIES};
use oculobench_core::{ExamLabels, PartialLabels, Task};
use proptest::prelude::*;

fn ratings(n: usize) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (prop::collection::vec(1u8..=5, n), prop::collection::vec(1u8..=5, n))
}

fn labels() -> impl Strategy<Value = ExamLabels> {
    (0u8..2, 0u8..2, 0u8..3).prop_map(|(advamd, pig, drus)| ExamLabels { advamd, pig, drus })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_participants(seed in any::<u64>(), participants in 1usize..80, train in 0.1f64..0.9) {
        let m = random_manifest(seed, participants, 5);
        let rest = 1.0 - train;
        let s = split_by_participant(&m, SplitRatios::new(train, rest / 2.0, rest / 2.0).unwrap(), seed).unwrap();
        let mut seen = BTreeSet::new();
        for members in s.splits.values() {
            for p in members {
                prop_assert!(seen.insert(p.clone()));
            }
        }
        prop_assert_eq!(seen.len(), m.participants().len());
        prop_assert_eq!(s.image_counts(&m).values().sum::<usize>(), m.len());
    }

    #[test]
    fn stratified_sample_has_exact_size(seed in any::<u64>(), n in 0usize..40) {
        let m = random_manifest(seed, 30, 4);
        prop_assume!(n <= m.len());
        let s = stratified_sample(&m, n, &Task::ALL, seed).unwrap();
        prop_assert_eq!(s.image_ids.len(), n);
        let distinct: BTreeSet<_> = s.image_ids.iter().collect();
        prop_assert_eq!(distinct.len(), n);
    }

    #[test]
    fn canonical_answers_round_trip(l in labels(), prefix in "[a-zA-Z .,:]{0,40}", suffix in "[a-zA-Z .,]{0,40}") {
        let text = format!("{prefix}{}{suffix}", canonical_answer(&l));
        let parsed = extract_labels(&text).unwrap();
        prop_assert_eq!(parsed.labels, PartialLabels::from(l));
    }

    #[test]
    fn parsed_values_stay_in_domain(text in ".{0,200}") {
        if let Ok(p) = extract_labels(&text) {
            for t in Task::ALL {
                if let Some(v) = p.labels.get(t) {
                    prop_assert!(t.contains(v));
                }
            }
        }
    }

    #[test]
    fn parser_is_deterministic(text in "[{}\":,a-zA-Z0-9 ]{0,120}") {
        let a = extract_labels(&text).map_err(|e| e.code);
        let b = extract_labels(&text).map_err(|e| e.code);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn kappa_is_symmetric_and_bounded((a, b) in (2usize..40).prop_flat_map(ratings), quadratic in any::<bool>()) {
        let w = if quadratic { Weighting::Quadratic } else { Weighting::None };
        let ab = kappa(&a, &b, &RUBRIC_CATEGORIES, w).unwrap();
        let ba = kappa(&b, &a, &RUBRIC_CATEGORIES, w).unwrap();
        match (ab, ba) {
            (KappaValue::Defined { kappa: x }, KappaValue::Defined { kappa: y }) => {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!(x <= 1.0 + 1e-12);
            }
            (KappaValue::Undefined { .. }, KappaValue::Undefined { .. }) => {}
            other => prop_assert!(false, "asymmetric definedness {:?}", other),
        }
        let self_k = kappa(&a, &a, &RUBRIC_CATEGORIES, w).unwrap();
        if let KappaValue::Defined { kappa } = self_k {
            prop_assert!((kappa - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mcnemar_is_symmetric_probability(b in 0u64..300, c in 0u64..300) {
        let p = mcnemar_exact_p(Discordant { b, c });
        prop_assert_eq!(p, mcnemar_exact_p(Discordant { b: c, c: b }));
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn clopper_pearson_brackets_estimate(n in 1u64..2000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as u64;
        let ci = clopper_pearson(k, n, 0.05).unwrap();
        let est = k as f64 / n as f64;
        prop_assert!(ci.low <= est && est <= ci.high);
        prop_assert!(0.0 <= ci.low && ci.high <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn plans_hold_their_invariants(seed in any::<u64>()) {
        let cases: Vec<String> = (0..120).map(|i| format!("C{i:03}")).collect();
        let models = vec!["alpha".to_string(), "beta".to_string()];
        let plan = build_assignments(&cases, StudyDesign::default(), &models, seed).unwrap();
        prop_assert_eq!(plan.check(), Ok(()));
        for r in &plan.public.raters {
            prop_assert_eq!(plan.public.rater_cases(r).len(), 60);
            for pk in plan.public.queue(r).unwrap() {
                prop_assert!(!pk.contains("alpha") && !pk.contains("beta"));
            }
        }
        let again = build_assignments(&cases, StudyDesign::default(), &models, seed).unwrap();
        prop_assert_eq!(plan, again);
    }
}
