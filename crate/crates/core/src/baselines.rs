//! CART trees, random forests and gradient boosting over feature vectors.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::model::KvConfig;
use crate::nn::{sigmoid_scalar, PROB_CLIP};
use crate::seeds;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`, the rest to `right`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// A binary tree stored in preorder; the root is node 0 and a split's left
/// child immediately follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value }] }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].leaf_value()
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn write(&self, out: &mut String) {
        let _ = writeln!(out, "tree {}", self.nodes.len());
        for n in &self.nodes {
            match *n {
                Node::Split { feature, threshold, .. } => {
                    let _ = writeln!(out, "S {feature} {threshold:?}");
                }
                Node::Leaf { value } => {
                    let _ = writeln!(out, "L {value:?}");
                }
            }
        }
    }

    fn read<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, n_features: usize) -> Result<Tree> {
        let (no, header) = next_line(lines)?;
        let count: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["tree", n] => parse_field(n, no)?,
            _ => return Err(format_error(no, "expected `tree <node count>`")),
        };
        let mut raw = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, line) = next_line(lines)?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let node = match parts.as_slice() {
                ["S", f, t] => {
                    let feature: usize = parse_field(f, no)?;
                    if feature >= n_features {
                        return Err(format_error(no, "split feature out of range"));
                    }
                    (Some((feature, parse_field::<f64>(t, no)?)), 0.0)
                }
                ["L", v] => (None, parse_field::<f64>(v, no)?),
                _ => return Err(format_error(no, "expected `S <feature> <threshold>` or `L <value>`")),
            };
            raw.push(node);
        }
        // Rebuild child links from the preorder layout.
        fn link(raw: &[(Option<(usize, f64)>, f64)], at: usize, nodes: &mut Vec<Node>) -> Result<usize> {
            let Some(&(split, value)) = raw.get(at) else {
                return Err(Error::ModelFormat("tree ends inside a split".into()));
            };
            let i = nodes.len();
            match split {
                None => {
                    nodes.push(Node::Leaf { value });
                    Ok(at + 1)
                }
                Some((feature, threshold)) => {
                    nodes.push(Node::Split { feature, threshold, left: i + 1, right: 0 });
                    let next = link(raw, at + 1, nodes)?;
                    let right = nodes.len();
                    if let Node::Split { right: r, .. } = &mut nodes[i] {
                        *r = right;
                    }
                    link(raw, next, nodes)
                }
            }
        }
        let mut nodes = Vec::with_capacity(count);
        let used = link(&raw, 0, &mut nodes)?;
        if used != count {
            return Err(Error::ModelFormat(format!("tree declares {count} nodes but uses {used}")));
        }
        Ok(Tree { nodes })
    }
}

impl Node {
    fn leaf_value(&self) -> f64 {
        match *self {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index always stops at a leaf"),
        }
    }
}

fn format_error(line: usize, msg: &str) -> Error {
    Error::ModelFormat(format!("line {line}: {msg}"))
}

fn next_line<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<(usize, &'a str)> {
    lines.next().ok_or_else(|| Error::ModelFormat("unexpected end of file".into()))
}

fn parse_field<V: std::str::FromStr>(s: &str, line: usize) -> Result<V> {
    s.parse().map_err(|_| format_error(line, &format!("cannot parse {s:?}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Gini impurity on 0/1 targets; leaves hold the positive fraction.
    Gini,
    /// Squared error; leaves hold the target mean.
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per split; `None` means all of them.
    pub max_features: Option<usize>,
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    n_features: usize,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64
    }

    /// Quantity to minimise for a child with `n` rows, target sum `s` and
    /// sum of squares `ss`: weighted Gini `n - s^2/n - (n-s)^2/n` or SSE
    /// `ss - s^2/n`.
    fn child_cost(&self, n: f64, s: f64, ss: f64) -> f64 {
        match self.params.criterion {
            Criterion::Gini => {
                let neg = n - s;
                n - (s * s + neg * neg) / n
            }
            Criterion::SquaredError => ss - s * s / n,
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.params.max_features {
            Some(m) if m < self.n_features => {
                let mut f = index::sample(&mut self.rng, self.n_features, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_features).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let total_s: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_ss: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let parent = self.child_cost(n as f64, total_s, total_ss);
        if parent <= 0.0 {
            return None;
        }
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in self.candidate_features() {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.x[r][f], self.y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut s, mut ss) = (0.0, 0.0);
            for i in 0..n - 1 {
                s += order[i].1;
                ss += order[i].1 * order[i].1;
                let nl = i + 1;
                if nl < min_leaf || n - nl < min_leaf || order[i].0 == order[i + 1].0 {
                    continue;
                }
                let score = self.child_cost(nl as f64, s, ss)
                    + self.child_cost((n - nl) as f64, total_s - s, total_ss - ss);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let threshold = 0.5 * (order[i].0 + order[i + 1].0);
                    best = Some(BestSplit { score, feature: f, threshold });
                }
            }
        }
        best.filter(|b| b.score < parent)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) {
        let split = if depth < self.params.max_depth { self.best_split(&rows) } else { None };
        let Some(split) = split else {
            let value = self.leaf_value(&rows);
            self.nodes.push(Node::Leaf { value });
            return;
        };
        let at = self.nodes.len();
        self.nodes.push(Node::Split { feature: split.feature, threshold: split.threshold, left: at + 1, right: 0 });
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x[r][split.feature] <= split.threshold);
        self.grow(left, depth + 1);
        let right_at = self.nodes.len();
        if let Node::Split { right: r, .. } = &mut self.nodes[at] {
            *r = right_at;
        }
        self.grow(right, depth + 1);
    }
}

fn check_matrix(x: &[Vec<f64>], n_targets: usize) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if x.len() != n_targets {
        return Err(Error::Config(format!("{} feature rows but {} targets", x.len(), n_targets)));
    }
    let width = x[0].len();
    if width == 0 || x.iter().any(|r| r.len() != width) {
        return Err(Error::Config("feature rows must share a non-zero width".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config("feature matrix contains non-finite values".into()));
    }
    Ok(width)
}

/// Grows one tree on `rows` (repeats allowed) of `(x, y)`.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], rows: Vec<usize>, params: TreeParams, seed: u64) -> Result<Tree> {
    let n_features = check_matrix(x, y.len())?;
    if rows.is_empty() {
        return Err(Error::Config("a tree needs at least one row".into()));
    }
    let mut g = Grower { x, y, params, n_features, nodes: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) };
    g.grow(rows, 0);
    Ok(Tree { nodes: g.nodes })
}

fn check_width(x: &[Vec<f64>], width: usize) -> Result<()> {
    match x.iter().find(|r| r.len() != width) {
        Some(r) => Err(Error::Config(format!("model expects {width} features, got {}", r.len()))),
        None => Ok(()),
    }
}

fn labels_to_targets(y: &[u8]) -> Result<Vec<f64>> {
    y.iter()
        .map(|&l| match l {
            0 | 1 => Ok(f64::from(l)),
            _ => Err(Error::Config(format!("label {l} is not 0 or 1"))),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_features: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: 12, min_leaf: 5, max_features: 7, bootstrap: true }
    }
}

impl ForestConfig {
    /// Reads `rf.*` keys, falling back to defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = ForestConfig::default();
        let cfg = ForestConfig {
            n_trees: kv.parsed_or("rf.n_trees", d.n_trees)?,
            max_depth: kv.parsed_or("rf.max_depth", d.max_depth)?,
            min_leaf: kv.parsed_or("rf.min_leaf", d.min_leaf)?,
            max_features: kv.parsed_or("rf.max_features", d.max_features)?,
            bootstrap: kv.parsed_or("rf.bootstrap", d.bootstrap)?,
        };
        if cfg.n_trees == 0 || cfg.min_leaf == 0 || cfg.max_features == 0 {
            return Err(Error::Config("rf.n_trees, rf.min_leaf and rf.max_features must be positive".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub seed: u64,
}

/// Bagged Gini trees with per-split feature subsampling. Trees grow in
/// parallel, each from its own seed derived from `seed`.
pub fn train_random_forest(x: &[Vec<f64>], y: &[u8], cfg: &ForestConfig, seed: u64) -> Result<ForestModel> {
    let targets = labels_to_targets(y)?;
    let n_features = check_matrix(x, targets.len())?;
    if cfg.n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    let params = TreeParams {
        criterion: Criterion::Gini,
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        max_features: Some(cfg.max_features),
    };
    let n = x.len();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seeds::derive(seed, "tree", t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(tree_seed, "bootstrap", 0));
            let rows = if cfg.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            fit_tree(x, &targets, rows, params, seeds::derive(tree_seed, "features", 0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees, n_features, seed })
}

impl ForestModel {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        if self.trees.is_empty() {
            return Err(Error::Config("forest has no trees".into()));
        }
        let k = self.trees.len() as f64;
        Ok(x.iter().map(|row| self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / k).collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "theftnet-forest {FORMAT_VERSION}\nn_features {}\nseed {}\nn_trees {}\n",
            self.n_features,
            self.seed,
            self.trees.len()
        );
        for t in &self.trees {
            t.write(&mut out);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        expect_header(&mut lines, "theftnet-forest")?;
        let n_features: usize = keyed(&mut lines, "n_features")?;
        let seed: u64 = keyed(&mut lines, "seed")?;
        let n_trees: usize = keyed(&mut lines, "n_trees")?;
        if n_trees == 0 {
            return Err(Error::ModelFormat("forest has no trees".into()));
        }
        let trees = (0..n_trees).map(|_| Tree::read(&mut lines, n_features)).collect::<Result<Vec<_>>>()?;
        expect_end(&mut lines)?;
        Ok(ForestModel { trees, n_features, seed })
    }
}

fn expect_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, magic: &str) -> Result<()> {
    let (no, line) = next_line(lines)?;
    match line.split_whitespace().collect::<Vec<_>>().as_slice() {
        [m, v] if *m == magic => {
            let v: u32 = parse_field(v, no)?;
            if v != FORMAT_VERSION {
                return Err(format_error(no, &format!("unsupported version {v}")));
            }
            Ok(())
        }
        _ => Err(format_error(no, &format!("expected `{magic} {FORMAT_VERSION}`"))),
    }
}

fn keyed<'a, V: std::str::FromStr>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<V> {
    let (no, line) = next_line(lines)?;
    match line.split_whitespace().collect::<Vec<_>>().as_slice() {
        [k, v] if *k == key => parse_field(v, no),
        _ => Err(format_error(no, &format!("expected `{key} <value>`"))),
    }
}

fn expect_end<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<()> {
    match lines.next() {
        None => Ok(()),
        Some((no, _)) => Err(format_error(no, "trailing content")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbmConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub learning_rate: f64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig { rounds: 200, max_depth: 3, min_leaf: 5, learning_rate: 0.1 }
    }
}

impl GbmConfig {
    /// Reads `gbm.*` keys, falling back to defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = GbmConfig::default();
        let cfg = GbmConfig {
            rounds: kv.parsed_or("gbm.rounds", d.rounds)?,
            max_depth: kv.parsed_or("gbm.max_depth", d.max_depth)?,
            min_leaf: kv.parsed_or("gbm.min_leaf", d.min_leaf)?,
            learning_rate: kv.parsed_or("gbm.learning_rate", d.learning_rate)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("gbm learning rate {} outside (0, 1]", self.learning_rate)));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("gbm.min_leaf must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmModel {
    pub initial_logit: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

fn clipped_logit(p: f64) -> f64 {
    let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    (p / (1.0 - p)).ln()
}

/// Boosted regression trees on the logistic loss. Each round fits the
/// residuals `y - p`; leaves take the mean residual, which always points
/// downhill, and the learning rate keeps the step short enough that the
/// training loss never increases.
pub fn train_gbm(x: &[Vec<f64>], y: &[u8], cfg: &GbmConfig) -> Result<GbmModel> {
    cfg.validate()?;
    let targets = labels_to_targets(y)?;
    let n_features = check_matrix(x, targets.len())?;
    let n = x.len();
    let prior = targets.iter().sum::<f64>() / n as f64;
    let initial_logit = clipped_logit(prior);
    let mut model = GbmModel { initial_logit, learning_rate: cfg.learning_rate, trees: Vec::new(), n_features };
    if prior == 0.0 || prior == 1.0 {
        return Ok(model);
    }
    let params =
        TreeParams { criterion: Criterion::SquaredError, max_depth: cfg.max_depth, min_leaf: cfg.min_leaf, max_features: None };
    let mut f = vec![initial_logit; n];
    let mut residual = vec![0.0; n];
    for _ in 0..cfg.rounds {
        for i in 0..n {
            residual[i] = targets[i] - sigmoid_scalar(f[i]);
        }
        let tree = fit_tree(x, &residual, (0..n).collect(), params, 0)?;
        for i in 0..n {
            f[i] += cfg.learning_rate * tree.predict(&x[i]);
        }
        model.trees.push(tree);
    }
    Ok(model)
}

impl GbmModel {
    /// Raw scores using only the first `stages` trees.
    pub fn logits_at(&self, x: &[Vec<f64>], stages: usize) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        let k = stages.min(self.trees.len());
        Ok(x
            .iter()
            .map(|row| {
                let boost: f64 = self.trees[..k].iter().map(|t| t.predict(row)).sum();
                self.initial_logit + self.learning_rate * boost
            })
            .collect())
    }

    pub fn predict_proba_at(&self, x: &[Vec<f64>], stages: usize) -> Result<Vec<f64>> {
        Ok(self.logits_at(x, stages)?.into_iter().map(sigmoid_scalar).collect())
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.predict_proba_at(x, self.trees.len())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "theftnet-gbm {FORMAT_VERSION}\nn_features {}\nlearning_rate {:?}\ninitial_logit {:?}\nn_trees {}\n",
            self.n_features,
            self.learning_rate,
            self.initial_logit,
            self.trees.len()
        );
        for t in &self.trees {
            t.write(&mut out);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        expect_header(&mut lines, "theftnet-gbm")?;
        let n_features: usize = keyed(&mut lines, "n_features")?;
        let learning_rate: f64 = keyed(&mut lines, "learning_rate")?;
        let initial_logit: f64 = keyed(&mut lines, "initial_logit")?;
        let n_trees: usize = keyed(&mut lines, "n_trees")?;
        let trees = (0..n_trees).map(|_| Tree::read(&mut lines, n_features)).collect::<Result<Vec<_>>>()?;
        expect_end(&mut lines)?;
        Ok(GbmModel { initial_logit, learning_rate, trees, n_features })
    }
}

/// Either shallow baseline behind one prediction interface.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Forest(ForestModel),
    Gbm(GbmModel),
}

impl BaselineModel {
    pub fn n_features(&self) -> usize {
        match self {
            BaselineModel::Forest(m) => m.n_features,
            BaselineModel::Gbm(m) => m.n_features,
        }
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            BaselineModel::Forest(m) => m.predict_proba(x),
            BaselineModel::Gbm(m) => m.predict_proba(x),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            BaselineModel::Forest(m) => m.to_text(),
            BaselineModel::Gbm(m) => m.to_text(),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        if text.trim_start().starts_with("theftnet-forest") {
            ForestModel::from_text(text).map(BaselineModel::Forest)
        } else if text.trim_start().starts_with("theftnet-gbm") {
            GbmModel::from_text(text).map(BaselineModel::Gbm)
        } else {
            Err(Error::ModelFormat("unknown model header".into()))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
