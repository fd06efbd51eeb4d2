use std::collections::BTreeMap;

use proptest::prelude::*;
use varcal::cpd::{mle, normalize_word, tvd, Cpd, WordCounts};
use varcal::experiments::improve::replaced_count;
use varcal::experiments::{improvement_sweep, subsample_cpd};
use varcal::metrics::ece;
use varcal::sampler::{first_word, slice_first_word};

/// Weight tables over a small shared vocabulary, so supports overlap.
fn cpd() -> impl Strategy<Value = Cpd> {
    prop::collection::btree_map(0u8..30, 0.01f64..10.0, 1..20)
        .prop_map(|m| Cpd::from_weights(m.into_iter().map(|(w, x)| (format!("w{w}"), x))).unwrap())
}

proptest! {
    #[test]
    fn tvd_is_a_bounded_metric(p in cpd(), q in cpd(), r in cpd()) {
        prop_assert_eq!(tvd(&p, &p), 0.0);
        prop_assert!((tvd(&p, &q) - tvd(&q, &p)).abs() <= 1e-12);
        prop_assert!(tvd(&p, &r) <= tvd(&p, &q) + tvd(&q, &r) + 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tvd(&p, &q)));
    }

    #[test]
    fn weights_normalize_and_renormalizing_is_a_no_op(p in cpd()) {
        prop_assert!((p.mass() - 1.0).abs() < 1e-9);
        let again = Cpd::from_probs(p.iter()).unwrap();
        prop_assert_eq!(&again, &p);
        let reweighted = Cpd::from_weights(p.iter()).unwrap();
        prop_assert!(tvd(&reweighted, &p) < 1e-12);
    }

    #[test]
    fn repartition_keeps_mass_and_contracts(p in cpd(), q in cpd(), groups in 1u8..6) {
        let g = |w: &str| format!("g{}", w[1..].parse::<u8>().unwrap() % groups);
        let (pg, qg) = (p.repartition(g), q.repartition(g));
        prop_assert!((pg.mass() - 1.0).abs() < 1e-9);
        prop_assert!(pg.support_size() <= groups as usize);
        prop_assert!(tvd(&pg, &qg) <= tvd(&p, &q) + 1e-12);
    }

    #[test]
    fn mle_is_relative_frequency(counts in prop::collection::btree_map("[a-e]{1,3}", 1u64..50, 1..10)) {
        let mut wc = WordCounts::new();
        for (w, c) in &counts {
            wc.add(w.clone(), *c);
        }
        let p = mle(&wc).unwrap();
        let total: u64 = counts.values().sum();
        for (w, c) in &counts {
            prop_assert!((p.prob(w) - *c as f64 / total as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn ece_is_bounded_and_order_free(
        points in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200),
        bins in 1usize..20,
        rot in 0usize..200,
    ) {
        let e = ece(&points, bins).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        let mut rotated = points.clone();
        rotated.rotate_left(rot % points.len());
        rotated.reverse();
        prop_assert!((ece(&rotated, bins).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn normalization_is_idempotent(raw in "\\PC{0,12}") {
        if let Some(w) = normalize_word(&raw) {
            prop_assert_eq!(normalize_word(&w), Some(w.clone()));
            prop_assert!(w.starts_with(char::is_alphanumeric) && w.ends_with(char::is_alphanumeric));
            prop_assert_eq!(w.to_lowercase(), w.clone());
        }
    }

    #[test]
    fn sliced_words_are_single_tokens(raw in "[ a-zA-Z,.']{0,20}") {
        for w in slice_first_word(&raw).into_iter().chain(first_word(&raw)) {
            prop_assert!(!w.contains(' '));
            prop_assert_eq!(normalize_word(&w), Some(w.clone()));
        }
    }

    #[test]
    fn sweep_replaces_nested_prefixes(
        pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..60),
        seed in any::<u64>(),
    ) {
        let model: BTreeMap<String, f64> = pairs.iter().enumerate().map(|(i, p)| (format!("c{i:02}"), p.0)).collect();
        let oracle: BTreeMap<String, f64> = pairs.iter().enumerate().map(|(i, p)| (format!("c{i:02}"), p.1)).collect();
        let ks = [0, 25, 50, 75, 100];
        let rows = improvement_sweep(&model, &oracle, &ks, &[seed], None).unwrap();
        for w in rows.windows(2) {
            prop_assert!(w[0].replaced_context_ids.is_subset(&w[1].replaced_context_ids));
        }
        for r in &rows {
            prop_assert_eq!(r.replaced_context_ids.len(), replaced_count(r.k_percent, pairs.len()));
            for (i, (id, v)) in model.iter().enumerate() {
                let expected = if r.replaced_context_ids.contains(id) { oracle[id] } else { *v };
                prop_assert_eq!(r.tvd_values[i], expected);
            }
        }
    }

    #[test]
    fn subsamples_are_distributions(
        words in prop::collection::vec("[a-d]", 1..40),
        frac in 0.01f64..=1.0,
        seed in any::<u64>(),
    ) {
        let size = ((words.len() as f64 * frac).ceil() as usize).max(1);
        let p = subsample_cpd(&words, size, seed).unwrap();
        prop_assert!((p.mass() - 1.0).abs() < 1e-9);
        prop_assert!(p.words().all(|w| words.iter().any(|x| x == w)));
        prop_assert_eq!(&p, &subsample_cpd(&words, size, seed).unwrap());
    }
}
