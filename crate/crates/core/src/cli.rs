//! Command-line driver: `generate`, `train`, `compare` and `features`.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::data::{generate_synthetic, load_csv, write_atomic, write_csv, SyntheticParams};
use crate::error::{Error, Result};
use crate::experiment::{compare, prepare, run_experiment, stability_diagnostic, ExperimentConfig, FoldModel, ModelKind};
use crate::features::write_feature_csv;
use crate::model::{save_checkpoint, KvConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "theftnet", version, about = "Electricity theft detection from daily smart-meter readings")]
pub struct Cli {
    /// Worker threads for parallel folds and trees (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset.
    Generate(GenerateArgs),
    /// Cross-validate one model kind.
    Train(TrainArgs),
    /// Cross-validate every model kind over several seeds and rank them.
    Compare(CompareArgs),
    /// Export the handcrafted feature matrix.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = parse_users)]
    pub users: usize,
    #[arg(long = "theft-frac", value_parser = parse_theft_fraction)]
    pub theft_frac: f64,
    #[arg(long, value_parser = parse_missing, default_value = "0")]
    pub missing: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// rf, gbm, cnn, densenet1d or ms-densenet.
    #[arg(long, value_parser = parse_kind)]
    pub model: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    /// Key-value config file (model, train.*, rf.*, gbm.*, cv.*).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated master seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Epochs for the ordering-stability diagnostic (0 skips it).
    #[arg(long, default_value_t = 15)]
    pub stability_epochs: usize,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_users(s: &str) -> std::result::Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("{s:?} is not a whole number"))?;
    if n < 10 {
        return Err("at least 10 users are required".into());
    }
    Ok(n)
}

fn parse_theft_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(0.0..1.0).contains(&v) {
        return Err("theft fraction must lie in [0, 1)".into());
    }
    Ok(v)
}

fn parse_missing(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(0.0..=0.2).contains(&v) {
        return Err("missing rate must lie in [0, 0.2]".into());
    }
    Ok(v)
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::parse(s).map_err(|e| e.to_string())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Provenance record written next to every command's outputs.
pub struct RunManifest {
    pub command_line: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub seed: String,
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command_line: &[OsString], config_hash: String, dataset_hash: String, seed: String) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let command_line = command_line.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>().join(" ");
        RunManifest { command_line, config_hash, dataset_hash, seed, timestamp }
    }

    pub fn to_text(&self) -> String {
        let mut kv = KvConfig::default();
        kv.set("command", &self.command_line);
        kv.set("config_sha256", &self.config_hash);
        kv.set("dataset_sha256", &self.dataset_hash);
        kv.set("seed", &self.seed);
        kv.set("version", env!("CARGO_PKG_VERSION"));
        kv.set("timestamp", self.timestamp);
        kv.to_text()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }
}

fn load_config(path: Option<&Path>) -> Result<(ExperimentConfig, String)> {
    match path {
        Some(p) => {
            let kv = KvConfig::load(p)?;
            Ok((ExperimentConfig::from_kv(&kv)?, hash_file(p)?))
        }
        None => Ok((ExperimentConfig::default(), sha256_hex(b""))),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_generate(args: &GenerateArgs, argv: &[OsString]) -> Result<String> {
    let params = SyntheticParams::new(args.users, args.theft_frac, args.missing, args.seed);
    let ds = generate_synthetic(args.users, args.theft_frac, args.missing, args.seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_csv(&ds, &args.out, Some(&params))?;
    let mut manifest_path = args.out.clone().into_os_string();
    manifest_path.push(".manifest");
    RunManifest::new(argv, sha256_hex(b""), hash_file(&args.out)?, args.seed.to_string())
        .write(Path::new(&manifest_path))?;
    let thefts = ds.labels().iter().filter(|&&l| l == 1).count();
    let missing: usize = ds.records.iter().map(|r| r.missing_count()).sum();
    Ok(format!(
        "wrote {} users ({} theft, {} normal, {} missing readings) to {}\n",
        ds.len(),
        thefts,
        ds.len() - thefts,
        missing,
        args.out.display()
    ))
}

fn cmd_train(args: &TrainArgs, argv: &[OsString]) -> Result<String> {
    let (cfg, config_hash) = load_config(args.config.as_deref())?;
    let ds = load_csv(&args.data)?;
    let prepared = prepare(&ds)?;
    ensure_dir(&args.out)?;
    let outcome = run_experiment(args.model, &prepared, &cfg, args.seed)?;
    let report = &outcome.report;
    write_atomic(&args.out.join("report.csv"), report.to_csv().as_bytes())?;
    write_atomic(&args.out.join("config.txt"), report.config_echo.as_bytes())?;
    let mut history = String::from("fold,epoch,train_logloss,val_logloss\n");
    for f in &outcome.folds {
        let k = f.metrics.fold;
        match &f.model {
            FoldModel::Neural(net) => save_checkpoint(net.as_ref(), &args.out.join(format!("fold{k}.ckpt")))?,
            FoldModel::Baseline(m) => m.save(args.out.join(format!("fold{k}.model")))?,
        }
        if let Some(h) = &f.history {
            for e in &h.epochs {
                let val = e.val_loss.map(|v| format!("{v:.10}")).unwrap_or_default();
                let _ = writeln!(history, "{k},{},{:.10},{val}", e.epoch, e.train_loss);
            }
        }
    }
    if args.model.is_neural() {
        write_atomic(&args.out.join("history.csv"), history.as_bytes())?;
    }
    RunManifest::new(argv, config_hash, hash_file(&args.data)?, args.seed.to_string())
        .write(&args.out.join("manifest.txt"))?;
    let mut out = report.to_table();
    if !prepared.dropped.is_empty() {
        let _ = writeln!(out, "dropped {} users that could not be imputed or standardized", prepared.dropped.len());
    }
    Ok(out)
}

fn cmd_compare(args: &CompareArgs, argv: &[OsString]) -> Result<String> {
    let (cfg, config_hash) = load_config(args.config.as_deref())?;
    if args.seeds.is_empty() {
        return Err(Error::Config("--seeds needs at least one seed".into()));
    }
    let ds = load_csv(&args.data)?;
    let prepared = prepare(&ds)?;
    ensure_dir(&args.out)?;
    let comparison = compare(&prepared, &ModelKind::ALL, &args.seeds, &cfg, |r| {
        eprintln!("{} seed {}: logloss {:.4} auc {:.4}", r.model_name, r.seed, r.mean_logloss, r.mean_auc);
    })?;
    write_atomic(&args.out.join("folds.csv"), comparison.folds_csv().as_bytes())?;
    write_atomic(&args.out.join("ranking.csv"), comparison.ranking_csv().as_bytes())?;
    let mut out = comparison.to_table();
    if args.stability_epochs > 0 {
        let report = stability_diagnostic(&prepared, &cfg, args.seeds[0], args.stability_epochs)?;
        write_atomic(&args.out.join("stability.csv"), report.to_csv().as_bytes())?;
        out.push('\n');
        out.push_str(&report.to_table());
    }
    write_atomic(&args.out.join("ranking.txt"), out.as_bytes())?;
    let seeds: Vec<String> = args.seeds.iter().map(u64::to_string).collect();
    RunManifest::new(argv, config_hash, hash_file(&args.data)?, seeds.join(","))
        .write(&args.out.join("manifest.txt"))?;
    Ok(out)
}

fn cmd_features(args: &FeaturesArgs) -> Result<String> {
    let ds = load_csv(&args.data)?;
    let imputed: Vec<_> = ds
        .records
        .iter()
        .filter_map(|r| crate::data::impute_missing(r).ok())
        .collect();
    let refs: Vec<_> = imputed.iter().collect();
    write_feature_csv(&refs, &args.out)?;
    Ok(format!("wrote features for {} of {} users to {}\n", refs.len(), ds.len(), args.out.display()))
}

/// Runs an already parsed command line and returns its stdout text.
pub fn execute(cli: &Cli, argv: &[OsString]) -> Result<String> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, argv),
        Command::Train(a) => cmd_train(a, argv),
        Command::Compare(a) => cmd_compare(a, argv),
        Command::Features(a) => cmd_features(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, &argv) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
