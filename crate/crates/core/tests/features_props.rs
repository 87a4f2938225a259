use proptest::prelude::*;
use theftnet::data::{generate_synthetic, impute_missing, ConsumptionRecord};
use theftnet::features::{extract_features, feature_names, lower_median, FEATURE_COUNT};
use theftnet::SERIES_LEN;

fn record(values: Vec<f64>) -> ConsumptionRecord {
    ConsumptionRecord::new("u", 0, values).unwrap()
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..40.0, SERIES_LEN)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_moves_each_statistic_as_expected(values in series(), c in 0.5f64..4.0) {
        let a = extract_features(&record(values.clone())).unwrap().values;
        let b = extract_features(&record(values.iter().map(|v| v * c).collect())).unwrap().values;
        let names = feature_names();
        for ((name, x), y) in names.iter().zip(&a).zip(&b) {
            let expected = if name.ends_with("_var") {
                x * c * c
            } else if name.ends_with("_skew") || name.ends_with("_divergence") {
                *x
            } else {
                x * c
            };
            let tol = 1e-9 * (1.0 + expected.abs());
            prop_assert!((y - expected).abs() < tol, "{name}: {y} vs {expected}");
        }
    }

    #[test]
    fn raising_the_last_day_raises_every_window_mean(values in series(), bump in 1.0f64..10.0) {
        let mut moved = values.clone();
        moved[SERIES_LEN - 1] += bump;
        let a = extract_features(&record(values)).unwrap().values;
        let b = extract_features(&record(moved)).unwrap().values;
        let names = feature_names();
        for i in 0..FEATURE_COUNT {
            if names[i].starts_with("w") && names[i].ends_with("_mean") {
                prop_assert!(b[i] > a[i]);
            }
        }
        let last_month = names.iter().position(|n| n == "month12_mean").unwrap();
        let first_month = names.iter().position(|n| n == "month01_mean").unwrap();
        prop_assert!(b[last_month] > a[last_month]);
        prop_assert_eq!(b[first_month], a[first_month]);
    }

    #[test]
    fn lower_median_is_an_order_statistic(v in prop::collection::vec(-100.0f64..100.0, 1..50)) {
        let m = lower_median(&v);
        let below = v.iter().filter(|&&x| x < m).count();
        let at_most = v.iter().filter(|&&x| x <= m).count();
        let k = (v.len() - 1) / 2;
        prop_assert!(below <= k && k < at_most);
    }
}

#[test]
fn window_stats_match_a_direct_computation() {
    let values: Vec<f64> = (0..SERIES_LEN).map(|t| (t % 11) as f64 + 0.5 * (t % 3) as f64).collect();
    let f = extract_features(&record(values.clone())).unwrap().values;
    let win = &values[SERIES_LEN - 30..];
    let mean = win.iter().sum::<f64>() / 30.0;
    let var = win.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 30.0;
    let mut sorted = win.to_vec();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(f[0], sorted[29]);
    assert_eq!(f[1], sorted[0]);
    assert!((f[2] - mean).abs() < 1e-12);
    assert!((f[3] - var).abs() < 1e-12);
    assert_eq!(f[4], sorted[14]);
    let first_month = values[5..35].iter().sum::<f64>() / 30.0;
    assert!((f[25] - first_month).abs() < 1e-12);
}

#[test]
fn all_zero_series_flags_divergence() {
    let f = extract_features(&record(vec![0.0; SERIES_LEN])).unwrap();
    assert!(f.divergence_undefined);
    assert!(f.values.iter().all(|v| *v == 0.0));
}

#[test]
fn features_are_finite_across_generated_users() {
    let ds = generate_synthetic(10_000, 0.15, 0.05, 21).unwrap();
    for r in &ds.records {
        let f = extract_features(&impute_missing(r).unwrap()).unwrap();
        assert_eq!(f.values.len(), FEATURE_COUNT);
        assert!(f.values.iter().all(|v| v.is_finite()), "user {}", r.user_id);
    }
}

#[test]
fn incomplete_records_are_rejected() {
    let mut values: Vec<Option<f64>> = vec![Some(1.0); SERIES_LEN];
    values[10] = None;
    let r = ConsumptionRecord::from_options("u", 0, &values).unwrap();
    assert!(extract_features(&r).is_err());
}
