use proptest::prelude::*;
use theftnet::baselines::{train_gbm, train_random_forest, BaselineModel, ForestConfig, GbmConfig};
use theftnet::metrics::logloss;

fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = (0..4).map(|_| next() * 10.0 - 5.0).collect();
        let score = row[0] + 0.5 * row[1] - 0.3 * row[2] + 2.0 * (next() - 0.5);
        y.push(u8::from(score > 0.0 || i == 0));
        x.push(row);
    }
    y[1] = 0;
    (x, y)
}

fn small_forest() -> ForestConfig {
    ForestConfig { n_trees: 15, max_depth: 6, min_leaf: 2, max_features: 2, bootstrap: true }
}

#[test]
fn forest_prediction_is_the_mean_of_its_trees() {
    let (x, y) = toy(200, 1);
    let model = train_random_forest(&x, &y, &small_forest(), 4).unwrap();
    let p = model.predict_proba(&x).unwrap();
    for (row, &pi) in x.iter().zip(&p) {
        let mean = model.trees.iter().map(|t| t.predict(row)).sum::<f64>() / model.trees.len() as f64;
        assert!((pi - mean).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&pi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn forest_ignores_increasing_feature_transforms(seed in 0u64..1000) {
        let (x, y) = toy(120, seed);
        let warped: Vec<Vec<f64>> =
            x.iter().map(|r| vec![r[0].exp(), r[1] * 3.0 + 1.0, r[2].powi(3), r[3].atan()]).collect();
        // Midpoint thresholds only route training rows identically, so every
        // row must be in every tree's sample.
        let cfg = ForestConfig { bootstrap: false, ..small_forest() };
        let a = train_random_forest(&x, &y, &cfg, seed).unwrap().predict_proba(&x).unwrap();
        let b = train_random_forest(&warped, &y, &cfg, seed).unwrap().predict_proba(&warped).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn separable_data_is_fit_exactly() {
    let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, (i % 7) as f64]).collect();
    let y: Vec<u8> = (0..60).map(|i| u8::from(i >= 30)).collect();
    let rf = train_random_forest(&x, &y, &ForestConfig { bootstrap: false, min_leaf: 1, ..small_forest() }, 0).unwrap();
    let gbm = train_gbm(&x, &y, &GbmConfig { rounds: 100, max_depth: 2, min_leaf: 1, learning_rate: 0.3 }).unwrap();
    for p in [rf.predict_proba(&x).unwrap(), gbm.predict_proba(&x).unwrap()] {
        assert!(p.iter().zip(&y).all(|(p, &l)| (p.round() as u8) == l));
    }
}

#[test]
fn more_boosting_rounds_lower_training_loss() {
    let (x, y) = toy(300, 9);
    let model = train_gbm(&x, &y, &GbmConfig::default()).unwrap();
    let early = logloss(&model.predict_proba_at(&x, 10).unwrap(), &y).unwrap();
    let late = logloss(&model.predict_proba_at(&x, 200).unwrap(), &y).unwrap();
    assert!(late < early, "{late} !< {early}");
    assert_eq!(model.predict_proba_at(&x, 200).unwrap(), model.predict_proba(&x).unwrap());
}

#[test]
fn single_class_gbm_is_a_constant() {
    let (x, _) = toy(40, 2);
    let model = train_gbm(&x, &vec![0u8; 40], &GbmConfig::default()).unwrap();
    assert!(model.trees.is_empty());
    let p = model.predict_proba(&x).unwrap();
    assert!(p.iter().all(|&v| v == p[0] && v > 0.0 && v < 1e-6));
}

#[test]
fn models_survive_a_text_round_trip() {
    let (x, y) = toy(150, 3);
    let models = [
        BaselineModel::Forest(train_random_forest(&x, &y, &small_forest(), 8).unwrap()),
        BaselineModel::Gbm(train_gbm(&x, &y, &GbmConfig { rounds: 30, ..GbmConfig::default() }).unwrap()),
    ];
    for m in models {
        let back = BaselineModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back.predict_proba(&x).unwrap(), m.predict_proba(&x).unwrap());
    }
    assert!(BaselineModel::from_text("garbage").is_err());
}

#[test]
fn width_mismatch_is_an_error() {
    let (x, y) = toy(50, 4);
    let model = train_random_forest(&x, &y, &small_forest(), 0).unwrap();
    assert!(model.predict_proba(&[vec![1.0, 2.0]]).is_err());
}
