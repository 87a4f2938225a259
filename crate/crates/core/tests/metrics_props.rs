use proptest::prelude::*;
use theftnet::metrics::{auc, logloss};

fn pairwise_auc(s: &[f64], y: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..200).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..25).prop_map(|v| f64::from(v) / 25.0), n),
            prop::collection::vec(0u8..=1, n),
        )
    })
    .prop_map(|(s, mut y)| {
        y[0] = 0;
        y[1] = 1;
        (s, y)
    })
}

proptest! {
    #[test]
    fn auc_matches_pair_counting((s, y) in scored_labels()) {
        prop_assert_eq!(auc(&s, &y).unwrap(), pairwise_auc(&s, &y));
    }

    #[test]
    fn auc_invariant_under_increasing_maps((s, y) in scored_labels()) {
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert_eq!(auc(&s, &y).unwrap(), auc(&t, &y).unwrap());
    }

    #[test]
    fn reversing_scores_complements_auc((s, y) in scored_labels()) {
        let r: Vec<f64> = s.iter().map(|v| -v).collect();
        let sum = auc(&s, &y).unwrap() + auc(&r, &y).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logloss_is_nonnegative_and_matches_scalar_sum(
        py in prop::collection::vec((0.0f64..=1.0, 0u8..=1), 1..100)
    ) {
        let (p, y): (Vec<f64>, Vec<u8>) = py.into_iter().unzip();
        let l = logloss(&p, &y).unwrap();
        prop_assert!(l >= 0.0 && l.is_finite());
        let mut acc = 0.0;
        for (&pi, &yi) in p.iter().zip(&y) {
            let q = pi.clamp(1e-15, 1.0 - 1e-15);
            acc += if yi == 1 { -q.ln() } else { -(1.0 - q).ln() };
        }
        prop_assert!((l - acc / p.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn clipped_perfect_predictions_are_near_zero() {
    assert!(logloss(&[1.0, 0.0, 1.0], &[1, 0, 1]).unwrap() <= 1e-14);
}
