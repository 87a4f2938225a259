//! Handcrafted features for the shallow baselines: window statistics,
//! monthly means and statistics of those means.

use std::path::Path;

use crate::data::{write_atomic, ConsumptionRecord};
use crate::error::{Error, Result};
use crate::SERIES_LEN;

/// Window lengths in days, counted back from the most recent reading.
pub const WINDOWS: [usize; 5] = [30, 60, 90, 180, 365];
pub const MONTHS: usize = 12;
pub const MONTH_LEN: usize = 30;
pub const WINDOW_STATS: usize = 5 * WINDOWS.len();
pub const MONTHLY_STATS: usize = 6;
pub const FEATURE_COUNT: usize = WINDOW_STATS + MONTHS + MONTHLY_STATS;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Set when the monthly means average to zero and divergence was
    /// replaced by 0.
    pub divergence_undefined: bool,
}

pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for w in WINDOWS {
        for stat in ["max", "min", "mean", "var", "median"] {
            names.push(format!("w{w:03}_{stat}"));
        }
    }
    for m in 1..=MONTHS {
        names.push(format!("month{m:02}_mean"));
    }
    for stat in ["max", "min", "var", "median", "skew", "divergence"] {
        names.push(format!("monthly_{stat}"));
    }
    names
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Lower-middle order statistic, index `(n - 1) / 2` after sorting.
pub fn lower_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[(s.len() - 1) / 2]
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check(r: &ConsumptionRecord) -> Result<()> {
    if r.readings.len() != SERIES_LEN || !r.is_complete() {
        return Err(Error::Config(format!("user {}: features need an imputed 365-day record", r.user_id)));
    }
    Ok(())
}

/// `{max, min, mean, variance, median}` for each window, in window order.
pub fn window_stats(r: &ConsumptionRecord) -> Result<Vec<f64>> {
    check(r)?;
    let mut out = Vec::with_capacity(WINDOW_STATS);
    for w in WINDOWS {
        let win = &r.readings[SERIES_LEN - w..];
        out.extend([max(win), min(win), mean(win), pop_var(win), lower_median(win)]);
    }
    Ok(out)
}

/// Means of the twelve 30-day blocks covering the last 360 days, oldest first.
pub fn monthly_averages(r: &ConsumptionRecord) -> Result<Vec<f64>> {
    check(r)?;
    let start = SERIES_LEN - MONTHS * MONTH_LEN;
    Ok(r.readings[start..].chunks_exact(MONTH_LEN).map(mean).collect())
}

/// `{max, min, variance, median, skew, divergence}` of the monthly means and
/// whether divergence was undefined.
pub fn monthly_stats(m: &[f64]) -> ([f64; MONTHLY_STATS], bool) {
    let mu = mean(m);
    let var = pop_var(m);
    let sd = var.sqrt();
    let skew = if sd > 0.0 {
        let m3 = m.iter().map(|x| (x - mu).powi(3)).sum::<f64>() / m.len() as f64;
        m3 / (sd * sd * sd)
    } else {
        0.0
    };
    let (divergence, undefined) = if mu == 0.0 { (0.0, true) } else { (sd / mu, false) };
    ([max(m), min(m), var, lower_median(m), skew, divergence], undefined)
}

pub fn extract_features(r: &ConsumptionRecord) -> Result<FeatureVector> {
    let mut values = window_stats(r)?;
    let months = monthly_averages(r)?;
    let (stats, divergence_undefined) = monthly_stats(&months);
    values.extend(months);
    values.extend(stats);
    Ok(FeatureVector { values, divergence_undefined })
}

/// Feature rows for every record, in order.
pub fn feature_matrix(records: &[&ConsumptionRecord]) -> Result<Vec<Vec<f64>>> {
    records.iter().map(|r| extract_features(r).map(|f| f.values)).collect()
}

/// CSV with one row per record: feature columns, then `label`.
pub fn write_feature_csv(records: &[&ConsumptionRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Config(format!("csv encoding failed: {e}"));
    let mut header = feature_names();
    header.push("label".into());
    w.write_record(&header).map_err(fail)?;
    for r in records {
        let mut row: Vec<String> = extract_features(r)?.values.iter().map(|v| v.to_string()).collect();
        row.push(r.label.to_string());
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
    write_atomic(path.as_ref(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(f: impl Fn(usize) -> f64) -> ConsumptionRecord {
        ConsumptionRecord::new("f", 0, (0..SERIES_LEN).map(f).collect()).unwrap()
    }

    #[test]
    fn names_are_stable_and_unique() {
        let names = feature_names();
        assert_eq!(names.len(), 43);
        assert_eq!(names, feature_names());
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 43);
    }

    #[test]
    fn constant_series() {
        let f = extract_features(&record(|_| 2.5)).unwrap();
        assert_eq!(f.values.len(), FEATURE_COUNT);
        for (name, v) in feature_names().iter().zip(&f.values) {
            let dispersion = name.ends_with("var") || name.ends_with("skew") || name.ends_with("divergence");
            assert_eq!(*v, if dispersion { 0.0 } else { 2.5 }, "{name}");
        }
        assert!(!f.divergence_undefined);
    }

    #[test]
    fn ramp_year_window() {
        let s = window_stats(&record(|t| (t + 1) as f64)).unwrap();
        let year = &s[20..25];
        assert_eq!(year[0], 365.0);
        assert_eq!(year[1], 1.0);
        assert_eq!(year[2], 183.0);
        assert_eq!(year[3], (365.0f64 * 365.0 - 1.0) / 12.0);
        assert_eq!(year[4], 183.0);
        // 30-day window is days 336..=365; lower median of 30 values is the 15th.
        assert_eq!(s[4], 350.0);
    }

    #[test]
    fn day_one_only_affects_year_window() {
        let a = window_stats(&record(|t| (t % 11) as f64)).unwrap();
        let b = window_stats(&record(|t| if t == 0 { 100.0 } else { (t % 11) as f64 })).unwrap();
        assert_eq!(a[..20], b[..20]);
        assert_ne!(a[20..], b[20..]);
    }

    #[test]
    fn step_series_monthly_means() {
        let m = monthly_averages(&record(|t| if t < 185 { 1.0 } else { 4.0 })).unwrap();
        // blocks start at day 5; the step at 185 is the boundary of block 6.
        let expected: Vec<f64> = (0..12).map(|i| if i < 6 { 1.0 } else { 4.0 }).collect();
        assert_eq!(m, expected);
        let m = monthly_averages(&record(|t| if t < 200 { 1.0 } else { 4.0 })).unwrap();
        assert_eq!(m[6], (15.0 * 1.0 + 15.0 * 4.0) / 30.0);
    }

    #[test]
    fn oldest_five_days_are_ignored() {
        let a = monthly_averages(&record(|t| t as f64)).unwrap();
        let b = monthly_averages(&record(|t| if t < 5 { -50.0 } else { t as f64 })).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monthly_stats_of_ramp() {
        let m: Vec<f64> = (1..=12).map(f64::from).collect();
        let (s, undefined) = monthly_stats(&m);
        let mu = 6.5;
        let var = m.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / 12.0;
        assert_eq!(s[0], 12.0);
        assert_eq!(s[1], 1.0);
        assert!((s[2] - 143.0 / 12.0).abs() < 1e-12);
        assert!((s[2] - var).abs() < 1e-12);
        assert_eq!(s[3], 6.0);
        assert!(s[4].abs() < 1e-12);
        assert!((s[5] - var.sqrt() / mu).abs() < 1e-12);
        assert!(!undefined);
    }

    #[test]
    fn skew_sign_and_degenerate_cases() {
        let (s, _) = monthly_stats(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 12.0]);
        // m3 / sd^3 for one outlier among n: (n - 2) / sqrt(n - 1)
        assert!((s[4] - 10.0 / 11f64.sqrt()).abs() < 1e-12);
        let (s, undefined) = monthly_stats(&[3.0; 12]);
        assert_eq!((s[2], s[4], s[5], undefined), (0.0, 0.0, 0.0, false));
        let (s, undefined) = monthly_stats(&[-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0]);
        assert_eq!(s[5], 0.0);
        assert!(undefined);
    }

    #[test]
    fn last_day_perturbation() {
        let a = extract_features(&record(|t| ((t * 7) % 13) as f64)).unwrap().values;
        let b = extract_features(&record(|t| if t == 364 { 40.0 } else { ((t * 7) % 13) as f64 })).unwrap().values;
        let names = feature_names();
        for i in 0..FEATURE_COUNT {
            let name = &names[i];
            if name.starts_with("month") && !name.starts_with("month12") && !name.starts_with("monthly") {
                assert_eq!(a[i], b[i], "{name}");
            }
        }
        let at = |n: &str| names.iter().position(|x| x == n).unwrap();
        assert_ne!(a[at("month12_mean")], b[at("month12_mean")]);
        assert_ne!(a[at("w365_mean")], b[at("w365_mean")]);
        assert_ne!(a[at("w030_max")], b[at("w030_max")]);
    }

    #[test]
    fn rejects_unimputed_records() {
        let mut missing = vec![false; SERIES_LEN];
        missing[3] = true;
        let r = ConsumptionRecord::with_mask("m", 0, vec![1.0; SERIES_LEN], missing).unwrap();
        assert!(extract_features(&r).is_err());
    }

    #[test]
    fn csv_export_has_label_last() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let r = record(|t| t as f64);
        write_feature_csv(&[&r], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 44);
        assert_eq!(header[43], "label");
        assert!(lines.next().unwrap().ends_with(",0"));
    }
}
