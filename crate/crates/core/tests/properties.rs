use proptest::prelude::*;

use uidscope::classifier::{self, TrainConfig};
use uidscope::eval::f1_report;
use uidscope::features::{self, FeatureConfig, SpanMode};
use uidscope::surprisal_io::{self, SurprisalSequence, TokenSurprisal};

fn surprisals(min_len: usize, max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..15.0, min_len..=max_len)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dispersion_is_zero_iff_constant(values in surprisals(2, 60), c in 0.0f64..10.0, len in 2usize..60) {
        let constant = vec![c; len];
        prop_assert_eq!(features::uid_variance(&constant).unwrap(), 0.0);
        prop_assert_eq!(features::uid_diff(&constant).unwrap(), 0.0);
        prop_assert_eq!(features::uid_diff_sq(&constant).unwrap(), 0.0);

        let all_equal = values.iter().all(|v| *v == values[0]);
        prop_assert_eq!(features::uid_variance(&values).unwrap() == 0.0, all_equal);
        prop_assert_eq!(features::uid_diff(&values).unwrap() == 0.0, all_equal);
        prop_assert_eq!(features::uid_diff_sq(&values).unwrap() == 0.0, all_equal);
    }

    #[test]
    fn extremes_bound_every_window(values in surprisals(2, 200), n in 2usize..40) {
        prop_assume!(values.len() >= n);
        let spans = features::extreme_spans(&values, n).unwrap();
        let vmax = features::uid_variance(&spans.max_span).unwrap();
        let vmin = features::uid_variance(&spans.min_span).unwrap();
        for w in values.windows(n) {
            let v = features::uid_variance(w).unwrap();
            prop_assert!(v <= vmax + 1e-9 * (1.0 + vmax));
            prop_assert!(v >= vmin - 1e-9 * (1.0 + vmin));
        }
    }

    #[test]
    fn shift_invariance(values in surprisals(25, 120), c in 0.5f64..20.0) {
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        let cfg = FeatureConfig::default();
        let a = features::featurize(&SurprisalSequence::from_surprisals("d", None, &values), &cfg).unwrap();
        let b = features::featurize(&SurprisalSequence::from_surprisals("d", None, &shifted), &cfg).unwrap();
        prop_assert!(close(b.mean_surprisal, a.mean_surprisal + c, 1e-12));
        prop_assert!(close(b.uid_variance, a.uid_variance, 1e-9));
        prop_assert!(close(b.uid_diff, a.uid_diff, 1e-9));
        prop_assert!(close(b.uid_diff_sq, a.uid_diff_sq, 1e-9));
        prop_assert_eq!(b.max_span_offset, a.max_span_offset);
        prop_assert_eq!(b.min_span_offset, a.min_span_offset);
    }

    #[test]
    fn scale_covariance(values in surprisals(25, 120), k in 0.1f64..10.0) {
        let scaled: Vec<f64> = values.iter().map(|v| v * k).collect();
        let cfg = FeatureConfig::default();
        let a = features::featurize(&SurprisalSequence::from_surprisals("d", None, &values), &cfg).unwrap();
        let b = features::featurize(&SurprisalSequence::from_surprisals("d", None, &scaled), &cfg).unwrap();
        prop_assert!(close(b.uid_diff, k * a.uid_diff, 1e-12));
        prop_assert!(close(b.uid_variance, k * k * a.uid_variance, 1e-12));
        prop_assert!(close(b.uid_diff_sq, k * k * a.uid_diff_sq, 1e-12));
        prop_assert_eq!(b.max_span_offset, a.max_span_offset);
        prop_assert_eq!(b.min_span_offset, a.min_span_offset);
    }

    #[test]
    fn featurize_is_pure(values in surprisals(2, 150), seed in any::<u64>(), n in 2usize..30) {
        let doc = SurprisalSequence::from_surprisals("p", None, &values);
        for mode in [SpanMode::MinMax, SpanMode::Random, SpanMode::None] {
            let cfg = FeatureConfig::default().with_span_mode(mode).with_span_length(n).with_seed(seed);
            let a = features::featurize(&doc, &cfg).unwrap().flatten();
            let b = features::featurize(&doc, &cfg).unwrap().flatten();
            prop_assert_eq!(a.len(), cfg.feature_dim());
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn surprisal_file_round_trip(
        docs in prop::collection::vec(
            ("[a-z0-9]{1,8}", prop::option::of("[a-z]{1,5}"), prop::collection::vec((".{1,6}", 0.0f64..1e6), 1..20)),
            0..8,
        )
    ) {
        let mut seen = std::collections::HashSet::new();
        let docs: Vec<SurprisalSequence> = docs
            .into_iter()
            .filter(|(id, _, _)| seen.insert(id.clone()))
            .map(|(id, label, toks)| {
                SurprisalSequence::new(id, label, toks.into_iter().map(|(t, s)| TokenSurprisal::new(t, s)).collect())
            })
            .collect();
        let text = surprisal_io::to_jsonl(&docs).unwrap();
        let parsed = surprisal_io::parse_surprisal_str(&text, std::path::Path::new("p")).unwrap();
        prop_assert!(parsed.rejects.is_empty());
        prop_assert_eq!(parsed.documents, docs);
    }

    #[test]
    fn f1_is_permutation_invariant(
        pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60),
        rotation in 0usize..60,
    ) {
        let names = ["a".to_string(), "b".to_string(), "c".to_string()];
        let pred: Vec<&str> = pairs.iter().map(|(p, _)| names[*p].as_str()).collect();
        let gold: Vec<&str> = pairs.iter().map(|(_, g)| names[*g].as_str()).collect();
        let r1 = f1_report(&pred, &gold, &names).unwrap();
        let k = rotation % pairs.len();
        let mut p2 = pred.clone();
        let mut g2 = gold.clone();
        p2.rotate_left(k);
        g2.rotate_left(k);
        p2.reverse();
        g2.reverse();
        let r2 = f1_report(&p2, &g2, &names).unwrap();
        prop_assert_eq!(&r1.confusion, &r2.confusion);
        prop_assert_eq!(r1.average_f1, r2.average_f1);
        for m in r1.per_class.values() {
            prop_assert!((0.0..=1.0).contains(&m.f1));
        }
        let supported: Vec<f64> = r1.per_class.values().filter(|m| m.support > 0).map(|m| m.f1).collect();
        let mean = supported.iter().sum::<f64>() / supported.len() as f64;
        prop_assert!((mean - r1.average_f1).abs() < 1e-15);
    }
}

fn two_blob_data(seed: u64) -> (Vec<Vec<f64>>, Vec<String>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..300 {
        let shift = if i % 3 == 0 { 1.5 } else { -1.0 };
        x.push(
            (0..5)
                .map(|j| shift * (j as f64 + 1.0) * 0.3 + rng.random_range(-1.0..1.0))
                .collect(),
        );
        y.push(if i % 3 == 0 { "pos" } else { "neg" }.to_string());
    }
    (x, y)
}

#[test]
fn standardization_makes_predictions_affine_invariant() {
    let (x, y) = two_blob_data(8);
    let labels = vec!["neg".to_string(), "pos".to_string()];
    let scale = [3.0, 0.01, 250.0, 1.0, 7.5];
    let offset = [100.0, -3.0, 0.5, 42.0, -9.0];
    let rescale = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| v * scale[j] + offset[j]).collect())
            .collect()
    };
    let cfg = TrainConfig::default();
    let (plain, _) = classifier::train(&x, &y, &labels, &cfg).unwrap();
    let xs = rescale(&x);
    let (scaled, _) = classifier::train(&xs, &y, &labels, &cfg).unwrap();
    let (test, _) = two_blob_data(9);
    let test_scaled = rescale(&test);
    for (a, b) in test.iter().zip(&test_scaled) {
        assert_eq!(plain.predict(a).unwrap(), scaled.predict(b).unwrap());
    }
}

#[test]
fn regularized_fit_is_order_independent() {
    // Strict convexity: row order only changes rounding, not the optimum.
    let (x, y) = two_blob_data(10);
    let labels = vec!["neg".to_string(), "pos".to_string()];
    let cfg = TrainConfig {
        convergence_tol: 1e-9,
        ..TrainConfig::default()
    };
    let (a, _) = classifier::train(&x, &y, &labels, &cfg).unwrap();
    let mut xr = x.clone();
    let mut yr = y.clone();
    xr.reverse();
    yr.reverse();
    let (b, _) = classifier::train(&xr, &yr, &labels, &cfg).unwrap();
    for (ra, rb) in a.weights.iter().zip(&b.weights) {
        for (wa, wb) in ra.iter().zip(rb) {
            assert!((wa - wb).abs() < 1e-6, "{wa} vs {wb}");
        }
    }
}
