//! Logloss and ROC AUC.

use crate::error::{Error, Result};
use crate::nn::bce_loss;

/// Mean binary cross entropy with probabilities clipped away from 0 and 1.
pub fn logloss(p: &[f64], y: &[u8]) -> Result<f64> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::Config(format!("logloss needs equal non-empty inputs, got {} and {}", p.len(), y.len())));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::Config("labels must be 0 or 1".into()));
    }
    Ok(bce_loss(p, y))
}

/// Area under the ROC curve from the rank-sum statistic, with tied scores
/// sharing their average rank.
pub fn auc(scores: &[f64], y: &[u8]) -> Result<f64> {
    if scores.len() != y.len() {
        return Err(Error::Config(format!("auc got {} scores for {} labels", scores.len(), y.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Config("auc scores contain NaN".into()));
    }
    let n_pos = y.iter().filter(|&&l| l == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are 1-based; a tie group spanning positions i..j gets (i + j + 1) / 2.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| y[k] == 1).count();
        rank_sum += avg * pos_in_group as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.3], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3, 0.2, 0.1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::AucUndefined)));
        assert!(matches!(auc(&[0.1, 0.2], &[0, 0]), Err(Error::AucUndefined)));
    }

    #[test]
    fn logloss_checks_inputs() {
        assert!(logloss(&[0.5], &[1, 0]).is_err());
        assert!(logloss(&[], &[]).is_err());
        let v = logloss(&[0.8, 0.4], &[1, 0]).unwrap();
        assert!((v - (-(0.8f64.ln()) - 0.6f64.ln()) / 2.0).abs() < 1e-15);
    }
}
