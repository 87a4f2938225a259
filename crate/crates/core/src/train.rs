//! Mini-batch training with Adam or momentum SGD and early stopping.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::logloss;
use crate::model::{KvConfig, Network};
use crate::nn::bce_with_logits;
use crate::seeds;
use crate::tensor::{Scalar, Tensor};

/// Rows per inference chunk when scoring.
pub const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd-momentum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd-momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
            _ => Err(Error::Config(format!("unknown optimizer {s:?} (expected adam or sgd-momentum)"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 40,
            patience: 5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 9] = [
        "train.optimizer",
        "train.learning_rate",
        "train.batch_size",
        "train.max_epochs",
        "train.patience",
        "train.beta1",
        "train.beta2",
        "train.epsilon",
        "train.momentum",
    ];

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("batch size and patience must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(0.0..1.0).contains(&self.momentum)
        {
            return Err(Error::Config("beta1, beta2 and momentum must lie in [0, 1)".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Reads `train.*` keys over the defaults; the seed is supplied separately.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = TrainConfig::default();
        let optimizer = match kv.get("train.optimizer") {
            Some(s) => OptimizerKind::parse(s)?,
            None => d.optimizer,
        };
        let cfg = TrainConfig {
            optimizer,
            learning_rate: kv.parsed_or("train.learning_rate", d.learning_rate)?,
            batch_size: kv.parsed_or("train.batch_size", d.batch_size)?,
            max_epochs: kv.parsed_or("train.max_epochs", d.max_epochs)?,
            patience: kv.parsed_or("train.patience", d.patience)?,
            seed: d.seed,
            beta1: kv.parsed_or("train.beta1", d.beta1)?,
            beta2: kv.parsed_or("train.beta2", d.beta2)?,
            epsilon: kv.parsed_or("train.epsilon", d.epsilon)?,
            momentum: kv.parsed_or("train.momentum", d.momentum)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_kv(&self, kv: &mut KvConfig) {
        kv.set("train.optimizer", self.optimizer);
        kv.set("train.learning_rate", self.learning_rate);
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.max_epochs", self.max_epochs);
        kv.set("train.patience", self.patience);
        kv.set("train.beta1", self.beta1);
        kv.set("train.beta2", self.beta2);
        kv.set("train.epsilon", self.epsilon);
        kv.set("train.momentum", self.momentum);
    }
}

/// Per-parameter optimizer state, kept in f64.
struct Optimizer {
    cfg: TrainConfig,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    fn new<T: Scalar>(cfg: TrainConfig, net: &Network<T>) -> Self {
        let shapes = net.param_shapes();
        let zeros = || shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Optimizer { cfg, step: 0, first: zeros(), second: zeros() }
    }

    fn apply<T: Scalar>(&mut self, net: &mut Network<T>) {
        self.step += 1;
        let c = self.cfg;
        let bias1 = 1.0 - c.beta1.powi(self.step);
        let bias2 = 1.0 - c.beta2.powi(self.step);
        for ((p, m), v) in net.params_mut().into_iter().zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.value.len() {
                let g = p.grad[i].to_f64();
                let delta = match c.optimizer {
                    OptimizerKind::Adam => {
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                        c.learning_rate * (m[i] / bias1) / ((v[i] / bias2).sqrt() + c.epsilon)
                    }
                    OptimizerKind::SgdMomentum => {
                        m[i] = c.momentum * m[i] + g;
                        c.learning_rate * m[i]
                    }
                };
                p.value[i] -= T::of(delta);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    /// Inference-mode logloss on the validation split, if one was given.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights the model ends with (1-based; 0 = initial).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.val_loss).collect()
    }
}

/// Labeled series ready for a network: `x` is `[n, 1, 365]`.
pub struct Split<'a, T> {
    pub x: &'a Tensor<T>,
    pub y: &'a [u8],
}

/// Inference-mode logloss and probabilities.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Split<'_, T>) -> Result<(f64, Vec<f64>)> {
    let p = net.predict_proba_chunked(data.x, EVAL_CHUNK)?;
    Ok((logloss(&p, data.y)?, p))
}

/// Trains `net` in place. With a validation split, stops after `patience`
/// epochs without a strict improvement in validation logloss and restores
/// the best weights seen; otherwise runs all `max_epochs`.
pub fn train_model<T: Scalar>(
    net: &mut Network<T>,
    train: &Split<'_, T>,
    val: Option<&Split<'_, T>>,
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    let n = train.x.batch();
    if n != train.y.len() {
        return Err(Error::Shape(format!("{} training rows but {} labels", n, train.y.len())));
    }
    let mut opt = Optimizer::new(*cfg, net);
    let mut history = History::default();
    let mut best: Option<(f64, Vec<T>)> = match val {
        Some(v) => Some((evaluate(net, v)?.0, net.state_vec())),
        None => None,
    };
    let mut stale = 0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for rows in order.chunks(cfg.batch_size) {
            let xb = train.x.select_batch(rows)?;
            let yb: Vec<u8> = rows.iter().map(|&r| train.y[r]).collect();
            net.zero_grad();
            let logits = net.forward(&xb)?;
            let (loss, grad) = bce_with_logits(&logits, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            net.backward(&grad)?;
            opt.apply(net);
            total += loss;
            batches += 1;
        }
        let train_loss = total / batches as f64;
        let val_loss = match val {
            Some(v) => {
                let l = evaluate(net, v)?.0;
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch });
                }
                Some(l)
            }
            None => None,
        };
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss });
        if let (Some(l), Some((best_loss, state))) = (val_loss, best.as_mut()) {
            if l < *best_loss {
                *best_loss = l;
                *state = net.state_vec();
                history.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        } else {
            history.best_epoch = epoch;
        }
    }
    if let Some((_, state)) = best {
        net.set_state(&state)?;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Profile};
    use crate::model::Architecture;

    fn toy_data(n: usize) -> (Tensor<f32>, Vec<u8>) {
        let mut data = Vec::with_capacity(n * 365);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            for t in 0..365 {
                let base = ((t as f32) * 0.9 + i as f32).sin();
                data.push(if label == 1 && t > 200 { base * 0.2 - 1.0 } else { base });
            }
            y.push(label);
        }
        (Tensor::new(vec![n, 1, 365], data).unwrap(), y)
    }

    fn full_loss(net: &mut Network<f32>, x: &Tensor<f32>, y: &[u8]) -> f64 {
        let logits = net.forward(x).unwrap();
        bce_with_logits(&logits, y).unwrap().0
    }

    fn small_net() -> Network<f32> {
        Network::build(&ModelConfig::preset(Architecture::Densenet1d, Profile::Desk), 3).unwrap()
    }

    #[test]
    fn one_epoch_reduces_training_loss() {
        let (x, y) = toy_data(32);
        let mut net = small_net();
        let before = full_loss(&mut net, &x, &y);
        let cfg = TrainConfig { max_epochs: 1, batch_size: 8, learning_rate: 1e-3, ..TrainConfig::default() };
        train_model(&mut net, &Split { x: &x, y: &y }, None, &cfg).unwrap();
        assert!(full_loss(&mut net, &x, &y) < before);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (x, y) = toy_data(16);
        let mut net = small_net();
        let before: Vec<Vec<f32>> = net.params().iter().map(|p| p.value.clone()).collect();
        let cfg = TrainConfig { max_epochs: 3, batch_size: 16, learning_rate: 0.0, ..TrainConfig::default() };
        let h = train_model(&mut net, &Split { x: &x, y: &y }, None, &cfg).unwrap();
        let after: Vec<Vec<f32>> = net.params().iter().map(|p| p.value.clone()).collect();
        assert_eq!(before, after);
        let losses: Vec<f64> = h.epochs.iter().map(|e| e.train_loss).collect();
        assert!(losses.iter().all(|&l| (l - losses[0]).abs() < 1e-6));
    }

    #[test]
    fn sgd_momentum_also_learns() {
        let (x, y) = toy_data(32);
        let mut net = small_net();
        let before = full_loss(&mut net, &x, &y);
        let cfg = TrainConfig {
            optimizer: OptimizerKind::SgdMomentum,
            learning_rate: 0.01,
            max_epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        };
        train_model(&mut net, &Split { x: &x, y: &y }, None, &cfg).unwrap();
        assert!(full_loss(&mut net, &x, &y) < before);
    }

    #[test]
    fn history_is_deterministic_and_best_state_restored() {
        let (x, y) = toy_data(40);
        let (vx, vy) = toy_data(10);
        let cfg = TrainConfig { max_epochs: 4, batch_size: 8, patience: 2, learning_rate: 5e-3, seed: 11, ..TrainConfig::default() };
        let run = || {
            let mut net = small_net();
            let h = train_model(&mut net, &Split { x: &x, y: &y }, Some(&Split { x: &vx, y: &vy }), &cfg).unwrap();
            (h, net)
        };
        let (h1, n1) = run();
        let (h2, n2) = run();
        assert_eq!(h1, h2);
        assert_eq!(n1.state_vec(), n2.state_vec());
        let (restored, _) = evaluate(&n1, &Split { x: &vx, y: &vy }).unwrap();
        if h1.best_epoch > 0 {
            let best = h1.epochs[h1.best_epoch - 1].val_loss.unwrap();
            assert_eq!(restored, best);
            assert!(h1.val_losses().iter().all(|&l| l >= best));
        }
    }

    #[test]
    fn diverging_run_reports_epoch() {
        let (x, y) = toy_data(8);
        let mut net = small_net();
        for p in net.params_mut() {
            p.value.iter_mut().for_each(|v| *v = f32::NAN);
        }
        let cfg = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
        let err = train_model(&mut net, &Split { x: &x, y: &y }, None, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1 }));
    }

    #[test]
    fn config_round_trips_through_kv() {
        let cfg = TrainConfig { optimizer: OptimizerKind::SgdMomentum, learning_rate: 0.02, patience: 3, ..TrainConfig::default() };
        let mut kv = KvConfig::default();
        cfg.write_kv(&mut kv);
        assert_eq!(TrainConfig::from_kv(&kv).unwrap(), cfg);
        kv.set("train.batch_size", 0);
        assert!(TrainConfig::from_kv(&kv).is_err());
    }
}
