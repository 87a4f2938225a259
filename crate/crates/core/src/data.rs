//! Consumption records, CSV I/O, imputation, standardization and the
//! synthetic smart-meter generator.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::config::KvConfig;
use crate::tensor::{Scalar, Tensor};
use crate::SERIES_LEN;

/// Minimum number of observed readings the interpolation stencil needs.
pub const STENCIL: usize = 4;

/// One user's year of daily readings. Masked readings are stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionRecord {
    pub user_id: String,
    pub label: u8,
    pub readings: Vec<f64>,
    pub missing: Vec<bool>,
}

impl ConsumptionRecord {
    /// Complete record with no missing readings.
    pub fn new(user_id: impl Into<String>, label: u8, readings: Vec<f64>) -> Result<Self> {
        let missing = vec![false; readings.len()];
        Self::with_mask(user_id, label, readings, missing)
    }

    pub fn with_mask(user_id: impl Into<String>, label: u8, mut readings: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        let user_id = user_id.into();
        if readings.len() != SERIES_LEN || missing.len() != SERIES_LEN {
            return Err(Error::Config(format!(
                "user {user_id}: expected {SERIES_LEN} readings, got {}",
                readings.len()
            )));
        }
        if label > 1 {
            return Err(Error::Config(format!("user {user_id}: label must be 0 or 1, got {label}")));
        }
        for (v, &m) in readings.iter_mut().zip(&missing) {
            if m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::Config(format!("user {user_id}: non-finite reading must be masked")));
            }
        }
        Ok(ConsumptionRecord { user_id, label, readings, missing })
    }

    /// Record from optional readings; `None` marks a missing day.
    pub fn from_options(user_id: impl Into<String>, label: u8, values: &[Option<f64>]) -> Result<Self> {
        let readings = values.iter().map(|v| v.unwrap_or(0.0)).collect();
        let missing = values.iter().map(Option::is_none).collect();
        Self::with_mask(user_id, label, readings, missing)
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn observed_count(&self) -> usize {
        SERIES_LEN - self.missing_count()
    }

    pub fn is_complete(&self) -> bool {
        !self.missing.iter().any(|&m| m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    ExternalCsv,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Synthetic => "synthetic",
            Provenance::ExternalCsv => "external-csv",
        }
    }
}

/// A labeled collection of records with unique user ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<ConsumptionRecord>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(records: Vec<ConsumptionRecord>, provenance: Provenance, seed: Option<u64>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.user_id.as_str()) {
                return Err(Error::Config(format!("duplicate user id {}", r.user_id)));
            }
        }
        Ok(Dataset { records, provenance, seed })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn theft_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.label == 1).count() as f64 / self.records.len() as f64
    }
}

fn expected_header() -> Vec<String> {
    let mut h = vec!["user_id".to_string(), "label".to_string()];
    h.extend((1..=SERIES_LEN).map(|d| format!("d{d:03}")));
    h
}

/// Parses the CSV contract `user_id,label,d001..d365`. Rows are numbered
/// from 1 for the header line.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<ConsumptionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let width = SERIES_LEN + 2;
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| Error::Parse { row: 1, message: e.to_string() })?,
        None => return Err(Error::Parse { row: 1, message: "missing header".into() }),
    };
    if header.len() != width {
        return Err(Error::Parse { row: 1, message: format!("header has {} columns, expected {width}", header.len()) });
    }
    for (i, (got, want)) in header.iter().zip(expected_header()).enumerate() {
        if got.trim() != want {
            return Err(Error::Parse { row: 1, message: format!("column {} is {got:?}, expected {want:?}", i + 1) });
        }
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { row: line, message: e.to_string() })?;
        if row.len() != width {
            return Err(Error::Parse { row: line, message: format!("{} columns, expected {width}", row.len()) });
        }
        let user_id = row[0].trim().to_string();
        if user_id.is_empty() {
            return Err(Error::Parse { row: line, message: "empty user_id".into() });
        }
        if !seen.insert(user_id.clone()) {
            return Err(Error::Parse { row: line, message: format!("duplicate user_id {user_id}") });
        }
        let label = match row[1].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Parse { row: line, message: format!("label {other:?} is not 0 or 1") }),
        };
        let mut values = Vec::with_capacity(SERIES_LEN);
        for (d, cell) in row.iter().skip(2).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() || cell == "NaN" {
                values.push(None);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(Some(v)),
                _ => {
                    return Err(Error::Parse {
                        row: line,
                        message: format!("d{:03} value {cell:?} is not a finite number", d + 1),
                    })
                }
            }
        }
        records.push(ConsumptionRecord::from_options(user_id, label, &values)?);
    }
    Ok(records)
}

/// Sidecar metadata path for a dataset CSV.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Loads a dataset CSV. A sidecar metadata file, when present, restores the
/// synthetic provenance and seed.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let records = parse_csv(file)?;
    let meta = metadata_path(path);
    let (provenance, seed) = if meta.exists() {
        let kv = KvConfig::load(&meta)?;
        match kv.get("provenance") {
            Some("synthetic") => (Provenance::Synthetic, kv.parsed::<u64>("seed")?),
            _ => (Provenance::ExternalCsv, None),
        }
    } else {
        (Provenance::ExternalCsv, None)
    };
    Dataset::new(records, provenance, seed)
}

pub fn to_csv_string(records: &[ConsumptionRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Config(format!("csv encoding failed: {e}"));
    w.write_record(expected_header()).map_err(fail)?;
    for r in records {
        let mut row = Vec::with_capacity(SERIES_LEN + 2);
        row.push(r.user_id.clone());
        row.push(r.label.to_string());
        for (v, &m) in r.readings.iter().zip(&r.missing) {
            row.push(if m { String::new() } else { format!("{v}") });
        }
        w.write_record(&row).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// Writes `path` atomically through a temporary sibling file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes the dataset CSV and, for synthetic data, its metadata sidecar.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>, params: Option<&SyntheticParams>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, to_csv_string(&dataset.records)?.as_bytes())?;
    if let Some(p) = params {
        let mut kv = KvConfig::default();
        kv.set("provenance", Provenance::Synthetic.as_str());
        kv.set("seed", p.seed);
        kv.set("n_users", p.n_users);
        kv.set("theft_fraction", p.theft_fraction);
        kv.set("p_missing", p.p_missing);
        kv.set("generator_version", GENERATOR_VERSION);
        write_atomic(&metadata_path(path), kv.to_text().as_bytes())?;
    }
    Ok(())
}

/// Barycentric Lagrange interpolation through `(xs, ys)` evaluated at `x`,
/// which must not coincide with a node.
pub fn barycentric(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        let mut w = 1.0;
        for (j, &xj) in xs.iter().enumerate() {
            if j != i {
                w /= xi - xj;
            }
        }
        let t = w / (x - xi);
        num += t * yi;
        den += t;
    }
    num / den
}

/// Indices of the interpolation stencil for missing position `t`: two
/// observed neighbours on each side, borrowing from the other side near
/// the edges. `observed` is sorted; `pos` is where `t` would be inserted.
fn stencil(observed: &[usize], pos: usize) -> [usize; STENCIL] {
    let left_avail = pos;
    let right_avail = observed.len() - pos;
    let mut left = 2.min(left_avail);
    let right = (STENCIL - left).min(right_avail);
    left = STENCIL - right;
    let start = pos - left;
    std::array::from_fn(|i| observed[start + i])
}

/// Fills every missing reading from the 4-point local barycentric stencil.
pub fn impute_missing(r: &ConsumptionRecord) -> Result<ConsumptionRecord> {
    let observed: Vec<usize> = (0..SERIES_LEN).filter(|&t| !r.missing[t]).collect();
    if observed.len() < STENCIL {
        return Err(Error::Imputation { user_id: r.user_id.clone(), observed: observed.len() });
    }
    let mut readings = r.readings.clone();
    for t in 0..SERIES_LEN {
        if !r.missing[t] {
            continue;
        }
        let pos = observed.partition_point(|&o| o < t);
        let idx = stencil(&observed, pos);
        let xs = idx.map(|i| i as f64);
        let ys = idx.map(|i| r.readings[i]);
        readings[t] = barycentric(&xs, &ys, t as f64);
    }
    Ok(ConsumptionRecord {
        user_id: r.user_id.clone(),
        label: r.label,
        readings,
        missing: vec![false; SERIES_LEN],
    })
}

/// Per-series standardization to zero mean and unit population variance.
pub fn zscore(r: &ConsumptionRecord) -> Result<ConsumptionRecord> {
    if !r.is_complete() {
        return Err(Error::Config(format!("user {}: standardize only imputed records", r.user_id)));
    }
    let n = r.readings.len() as f64;
    let mean = r.readings.iter().sum::<f64>() / n;
    let var = r.readings.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 {
        return Err(Error::Standardization(r.user_id.clone()));
    }
    Ok(ConsumptionRecord {
        user_id: r.user_id.clone(),
        label: r.label,
        readings: r.readings.iter().map(|v| (v - mean) / sd).collect(),
        missing: r.missing.clone(),
    })
}

/// Impute then standardize.
pub fn preprocess(r: &ConsumptionRecord) -> Result<ConsumptionRecord> {
    zscore(&impute_missing(r)?)
}

/// Stacks complete records into a `[n, 1, 365]` tensor.
pub fn to_tensor<T: Scalar>(records: &[&ConsumptionRecord]) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(records.len() * SERIES_LEN);
    for r in records {
        data.extend(r.readings.iter().map(|&v| T::of(v)));
    }
    Tensor::new(vec![records.len(), 1, SERIES_LEN], data)
}

pub const GENERATOR_VERSION: u32 = 1;

/// Earliest and latest day a theft pattern may start.
pub const ONSET_RANGE: (usize, usize) = (90, 300);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub n_users: usize,
    pub theft_fraction: f64,
    pub p_missing: f64,
    pub seed: u64,
}

impl SyntheticParams {
    pub fn new(n_users: usize, theft_fraction: f64, p_missing: f64, seed: u64) -> Self {
        SyntheticParams { n_users, theft_fraction, p_missing, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users < 10 {
            return Err(Error::Config(format!("need at least 10 users, got {}", self.n_users)));
        }
        if !(0.0..1.0).contains(&self.theft_fraction) {
            return Err(Error::Config(format!("theft fraction {} outside [0, 1)", self.theft_fraction)));
        }
        if !(0.0..=0.2).contains(&self.p_missing) {
            return Err(Error::Config(format!("missing rate {} outside [0, 0.2]", self.p_missing)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TheftPattern {
    /// Readings multiplied by `alpha`.
    Scale { alpha: f64 },
    /// `days` random days of every week reported as zero.
    ZeroDays { days: usize },
    /// Readings capped at the given quantile of the honest series.
    Cap { quantile: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theft {
    pub onset: usize,
    pub pattern: TheftPattern,
}

/// A generated user with the ground truth behind its record.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUser {
    pub record: ConsumptionRecord,
    /// What the meter would have reported without theft or gaps.
    pub honest: Vec<f64>,
    pub theft: Option<Theft>,
}

fn honest_series(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base = rng.random_range(2.0..=30.0);
    let a_w = rng.random_range(0.05..=0.3);
    let a_s = rng.random_range(0.1..=0.5);
    let phi = rng.random_range(0.0..2.0 * PI);
    let psi = rng.random_range(0.0..2.0 * PI);
    let noise = Normal::new(0.0, 0.05 * base).expect("positive noise scale");
    (0..SERIES_LEN)
        .map(|t| {
            let t = t as f64;
            let c = base * (1.0 + a_w * (2.0 * PI * t / 7.0 + phi).sin() + a_s * (2.0 * PI * t / 365.0 + psi).sin());
            (c + noise.sample(rng)).max(0.0)
        })
        .collect()
}

fn lower_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((sorted.len() - 1) as f64 * q).floor() as usize;
    sorted[idx]
}

fn apply_theft(honest: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Theft) {
    let onset = rng.random_range(ONSET_RANGE.0..=ONSET_RANGE.1);
    let mut out = honest.to_vec();
    let pattern = match rng.random_range(0..3u8) {
        0 => {
            let alpha = rng.random_range(0.2..=0.8);
            out[onset..].iter_mut().for_each(|v| *v *= alpha);
            TheftPattern::Scale { alpha }
        }
        1 => {
            let days = rng.random_range(1..=3usize);
            let mut week: Vec<usize> = (0..7).collect();
            let mut start = onset;
            while start < SERIES_LEN {
                week.shuffle(rng);
                for &d in &week[..days] {
                    if start + d < SERIES_LEN {
                        out[start + d] = 0.0;
                    }
                }
                start += 7;
            }
            TheftPattern::ZeroDays { days }
        }
        _ => {
            let quantile = rng.random_range(0.2..=0.6);
            let threshold = lower_quantile(honest, quantile);
            out[onset..].iter_mut().for_each(|v| *v = v.min(threshold));
            TheftPattern::Cap { quantile, threshold }
        }
    };
    (out, Theft { onset, pattern })
}

/// Generates users with their honest counterfactuals.
///
/// Exactly `round(n * theft_fraction)` users are thieves, placed at random
/// positions; each user draws its own profile, pattern and gaps from a
/// single seeded stream.
pub fn generate_users(params: &SyntheticParams) -> Result<Vec<SyntheticUser>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_theft = (params.n_users as f64 * params.theft_fraction).round() as usize;
    let mut labels: Vec<u8> = (0..params.n_users).map(|i| u8::from(i < n_theft)).collect();
    labels.shuffle(&mut rng);

    let width = params.n_users.to_string().len().max(5);
    let mut users = Vec::with_capacity(params.n_users);
    for (i, &label) in labels.iter().enumerate() {
        let honest = honest_series(&mut rng);
        let (reported, theft) = if label == 1 {
            let (r, t) = apply_theft(&honest, &mut rng);
            (r, Some(t))
        } else {
            (honest.clone(), None)
        };
        let mut missing: Vec<bool> = (0..SERIES_LEN).map(|_| rng.random_bool(params.p_missing)).collect();
        // Keep every user imputable even under pathological draws.
        if missing.iter().filter(|&&m| !m).count() < STENCIL {
            missing[..STENCIL].iter_mut().for_each(|m| *m = false);
        }
        let record = ConsumptionRecord::with_mask(format!("u{i:0width$}"), label, reported, missing)?;
        users.push(SyntheticUser { record, honest, theft });
    }
    Ok(users)
}

pub fn generate_synthetic(n_users: usize, theft_fraction: f64, p_missing: f64, seed: u64) -> Result<Dataset> {
    let params = SyntheticParams::new(n_users, theft_fraction, p_missing, seed);
    let records = generate_users(&params)?.into_iter().map(|u| u.record).collect();
    Dataset::new(records, Provenance::Synthetic, Some(seed))
}
