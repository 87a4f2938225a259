use proptest::prelude::*;
use theftnet::data::{
    barycentric, generate_synthetic, generate_users, impute_missing, load_csv, preprocess, write_csv, zscore,
    ConsumptionRecord, Provenance, SyntheticParams,
};
use theftnet::SERIES_LEN;

fn naive_lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..xs.len() {
        let mut term = ys[i];
        for j in 0..xs.len() {
            if i != j {
                term *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        total += term;
    }
    total
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..50.0, SERIES_LEN)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cubic_gaps_are_recovered(
        coef in prop::collection::vec(-3.0f64..3.0, 4),
        start in 0usize..SERIES_LEN - 8,
        len in 1usize..8,
    ) {
        let poly = |t: usize| {
            let u = t as f64 / 100.0;
            coef.iter().rev().fold(0.0, |acc, c| acc * u + c)
        };
        let values: Vec<Option<f64>> =
            (0..SERIES_LEN).map(|t| if (start..start + len).contains(&t) { None } else { Some(poly(t)) }).collect();
        let out = impute_missing(&ConsumptionRecord::from_options("p", 0, &values).unwrap()).unwrap();
        for t in start..start + len {
            prop_assert!((out.readings[t] - poly(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn imputation_keeps_observed_values(
        values in series(),
        mask in prop::collection::vec(prop::bool::weighted(0.1), SERIES_LEN),
    ) {
        let r = ConsumptionRecord::with_mask("u", 0, values.clone(), mask.clone()).unwrap();
        let out = impute_missing(&r).unwrap();
        prop_assert!(out.is_complete());
        for t in 0..SERIES_LEN {
            if !mask[t] {
                prop_assert_eq!(out.readings[t], values[t]);
            }
            prop_assert!(out.readings[t].is_finite());
        }
    }

    #[test]
    fn zscore_is_idempotent(values in series()) {
        let r = ConsumptionRecord::new("u", 1, values).unwrap();
        let Ok(z) = zscore(&r) else { return Ok(()) };
        let zz = zscore(&z).unwrap();
        for (a, b) in z.readings.iter().zip(&zz.readings) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn barycentric_matches_naive_lagrange(
        ys in prop::collection::vec(-10.0f64..10.0, 4),
        gaps in prop::collection::vec(1usize..6, 4),
        x in 0.0f64..30.0,
    ) {
        let mut xs = Vec::new();
        let mut at = 0.0;
        for g in gaps {
            at += g as f64;
            xs.push(at);
        }
        if xs.contains(&x) {
            return Ok(());
        }
        let a = barycentric(&xs, &ys, x);
        let b = naive_lagrange(&xs, &ys, x);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }
}

#[test]
fn leading_gap_uses_the_four_nearest_observed_days() {
    let mut values: Vec<Option<f64>> = (0..SERIES_LEN).map(|t| Some((t as f64 * 0.37).sin() * 5.0 + 10.0)).collect();
    values[0] = None;
    values[2] = None;
    let r = ConsumptionRecord::from_options("u", 0, &values).unwrap();
    let out = impute_missing(&r).unwrap();
    let xs = [1.0, 3.0, 4.0, 5.0];
    let ys: Vec<f64> = xs.iter().map(|&x| values[x as usize].unwrap()).collect();
    assert!((out.readings[0] - naive_lagrange(&xs, &ys, 0.0)).abs() < 1e-9);
}

#[test]
fn label_balance_is_exact() {
    let ds = generate_synthetic(1000, 0.1, 0.02, 11).unwrap();
    assert_eq!(ds.len(), 1000);
    assert_eq!(ds.labels().iter().filter(|&&l| l == 1).count(), 100);
    let none = generate_synthetic(50, 0.0, 0.0, 11).unwrap();
    assert!(none.labels().iter().all(|&l| l == 0));
}

#[test]
fn theft_lowers_post_onset_consumption() {
    let users = generate_users(&SyntheticParams::new(1000, 0.5, 0.0, 5)).unwrap();
    let (mut reported, mut honest, mut thieves) = (0.0, 0.0, 0);
    for u in &users {
        let Some(t) = u.theft else {
            assert_eq!(u.record.readings, u.honest);
            continue;
        };
        assert_eq!(u.record.readings[..t.onset], u.honest[..t.onset]);
        for (r, h) in u.record.readings[t.onset..].iter().zip(&u.honest[t.onset..]) {
            assert!(r <= h, "user {} pattern {:?}", u.record.user_id, t.pattern);
        }
        reported += u.record.readings[t.onset..].iter().sum::<f64>();
        honest += u.honest[t.onset..].iter().sum::<f64>();
        thieves += 1;
    }
    assert_eq!(thieves, 500);
    assert!(reported < 0.9 * honest, "{reported} vs {honest}");
}

#[test]
fn generated_records_survive_preprocessing() {
    let ds = generate_synthetic(500, 0.15, 0.2, 3).unwrap();
    for r in &ds.records {
        assert!(r.observed_count() >= 4);
        let z = preprocess(r).unwrap();
        assert!(z.readings.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn same_seed_same_bytes_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let params = SyntheticParams::new(40, 0.2, 0.05, 9);
    write_csv(&generate_synthetic(40, 0.2, 0.05, 9).unwrap(), &a, Some(&params)).unwrap();
    write_csv(&generate_synthetic(40, 0.2, 0.05, 9).unwrap(), &b, Some(&params)).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let back = load_csv(&a).unwrap();
    let orig = generate_synthetic(40, 0.2, 0.05, 9).unwrap();
    assert_eq!(back.records, orig.records);
    assert_eq!(back.provenance, Provenance::Synthetic);
    assert_eq!(back.seed, Some(9));
}

#[test]
fn invalid_generator_arguments_are_rejected() {
    assert!(generate_synthetic(1000, 1.5, 0.02, 0).is_err());
    assert!(generate_synthetic(1000, 0.1, 0.5, 0).is_err());
    assert!(generate_synthetic(3, 0.1, 0.0, 0).is_err());
}
