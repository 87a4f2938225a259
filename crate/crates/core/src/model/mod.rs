//! The three network architectures and their shared prediction interface.

mod checkpoint;
pub mod config;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::KvConfig;

use std::fmt;

use rand::SeedableRng;

use crate::blocks::{
    BlockSummary, ConvSpec, DenseBlock, DenseBlockSpec, DensePartSpec, Ordering, Transition, TransitionSpec, Wiring,
};
use crate::error::{Error, Result};
use crate::nn::{
    sigmoid_scalar, AvgPool1d, Conv1d, Dense, Flatten, GlobalAvgPool, InitRng, Layer, LayerSummary, Param, Relu,
    Sequential,
};
use crate::tensor::{Scalar, Tensor};
use crate::SERIES_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    ClassicalCnn,
    Densenet1d,
    MultiscaleDensenet,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::ClassicalCnn => "classical_cnn",
            Architecture::Densenet1d => "densenet_1d",
            Architecture::MultiscaleDensenet => "multiscale_densenet",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classical_cnn" => Ok(Architecture::ClassicalCnn),
            "densenet_1d" => Ok(Architecture::Densenet1d),
            "multiscale_densenet" => Ok(Architecture::MultiscaleDensenet),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// Layer widths as described for the published architectures.
    Paper,
    /// Same topology with narrow layers, sized for single-core CPU runs.
    Desk,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!("unknown profile {other:?} (expected paper or desk)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }
}

/// Declarative description of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub name: String,
    pub architecture: Architecture,
    pub input_length: usize,
    pub input_channels: usize,
    /// Stem convolution in front of the first dense block.
    pub stem: Option<ConvSpec>,
    /// Convolutions of the classical CNN, each followed by ReLU and pooling.
    pub conv_layers: Vec<ConvSpec>,
    /// Average-pool window (= stride) after each classical CNN convolution.
    pub pool: usize,
    pub blocks: Vec<DenseBlockSpec>,
    pub transitions: Vec<TransitionSpec>,
    /// Fully connected widths; the last entry is the single logit.
    pub head: Vec<usize>,
}

impl ModelConfig {
    /// conv(32,k7) -> pool -> conv(32,k7) -> pool -> FC 64 -> 32 -> 1.
    pub fn classical_cnn() -> Self {
        ModelConfig {
            name: "cnn".into(),
            architecture: Architecture::ClassicalCnn,
            input_length: SERIES_LEN,
            input_channels: 1,
            stem: None,
            conv_layers: vec![ConvSpec { filters: 32, kernel: 7 }; 2],
            pool: 2,
            blocks: Vec::new(),
            transitions: Vec::new(),
            head: vec![64, 32, 1],
        }
    }

    /// Two dense blocks of six bottleneck parts (128/k1 + 32/k3).
    pub fn densenet1d() -> Self {
        ModelConfig {
            name: "densenet1d".into(),
            architecture: Architecture::Densenet1d,
            input_length: SERIES_LEN,
            input_channels: 1,
            stem: Some(ConvSpec { filters: 16, kernel: 7 }),
            conv_layers: Vec::new(),
            pool: 1,
            blocks: vec![DenseBlockSpec::standard(); 2],
            transitions: vec![TransitionSpec::default()],
            head: vec![1],
        }
    }

    /// Two multi-scale blocks of six parts with kernels 30/14/7/3.
    pub fn multiscale_densenet() -> Self {
        ModelConfig {
            name: "ms-densenet".into(),
            architecture: Architecture::MultiscaleDensenet,
            input_length: SERIES_LEN,
            input_channels: 1,
            stem: Some(ConvSpec { filters: 16, kernel: 7 }),
            conv_layers: Vec::new(),
            pool: 1,
            blocks: vec![DenseBlockSpec::multiscale(); 2],
            transitions: vec![TransitionSpec::default()],
            head: vec![1],
        }
    }

    pub fn preset(architecture: Architecture, profile: Profile) -> Self {
        match (architecture, profile) {
            (Architecture::ClassicalCnn, _) => ModelConfig::classical_cnn(),
            (Architecture::Densenet1d, Profile::Paper) => ModelConfig::densenet1d(),
            (Architecture::MultiscaleDensenet, Profile::Paper) => ModelConfig::multiscale_densenet(),
            (Architecture::Densenet1d, Profile::Desk) => {
                let part = DensePartSpec {
                    layers: vec![ConvSpec { filters: 16, kernel: 1 }, ConvSpec { filters: 8, kernel: 3 }],
                    ordering: Ordering::BnReluConv,
                    wiring: Wiring::Bottleneck,
                };
                ModelConfig {
                    stem: Some(ConvSpec { filters: 8, kernel: 7 }),
                    blocks: vec![DenseBlockSpec { parts: 2, part }; 2],
                    transitions: vec![TransitionSpec { compression: 0.5, pool_stride: 2 }],
                    ..ModelConfig::densenet1d()
                }
            }
            (Architecture::MultiscaleDensenet, Profile::Desk) => ModelConfig {
                stem: Some(ConvSpec { filters: 8, kernel: 7 }),
                blocks: vec![
                    DenseBlockSpec { parts: 2, part: DensePartSpec::multiscale_with(&[4, 4, 4, 4], &[30, 14, 7, 3]) };
                    2
                ],
                transitions: vec![TransitionSpec { compression: 0.5, pool_stride: 2 }],
                ..ModelConfig::multiscale_densenet()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 || self.input_channels == 0 {
            return Err(Error::Config("input length and channels must be positive".into()));
        }
        if self.head.last() != Some(&1) || self.head.contains(&0) {
            return Err(Error::Config(format!("head {:?} must end in a single output unit", self.head)));
        }
        match self.architecture {
            Architecture::ClassicalCnn => {
                if self.conv_layers.is_empty() || !self.blocks.is_empty() {
                    return Err(Error::Config("classical CNN needs conv layers and no dense blocks".into()));
                }
                if self.pool == 0 {
                    return Err(Error::Config("pool window must be >= 1".into()));
                }
            }
            Architecture::Densenet1d | Architecture::MultiscaleDensenet => {
                if self.blocks.is_empty() {
                    return Err(Error::Config("dense architectures need at least one block".into()));
                }
                if self.transitions.len() + 1 != self.blocks.len() {
                    return Err(Error::Config(format!(
                        "{} blocks need {} transitions, got {}",
                        self.blocks.len(),
                        self.blocks.len() - 1,
                        self.transitions.len()
                    )));
                }
                let want_multiscale = self.architecture == Architecture::MultiscaleDensenet;
                for block in &self.blocks {
                    block.part.validate()?;
                    if block.is_multiscale() != want_multiscale {
                        return Err(Error::Config(format!(
                            "{} expects {} wiring in every block",
                            self.architecture,
                            if want_multiscale { "dense" } else { "bottleneck" }
                        )));
                    }
                }
                for t in &self.transitions {
                    t.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Serialize into the flat key-value format.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("name", &self.name);
        kv.set("architecture", self.architecture);
        kv.set("input_length", self.input_length);
        kv.set("input_channels", self.input_channels);
        match self.architecture {
            Architecture::ClassicalCnn => {
                let filters: Vec<usize> = self.conv_layers.iter().map(|c| c.filters).collect();
                let kernels: Vec<usize> = self.conv_layers.iter().map(|c| c.kernel).collect();
                kv.set_list("conv_filters", &filters);
                kv.set_list("conv_kernels", &kernels);
                kv.set("pool", self.pool);
            }
            _ => {
                if let Some(stem) = self.stem {
                    kv.set("stem_filters", stem.filters);
                    kv.set("stem_kernel", stem.kernel);
                }
                // Blocks are homogeneous in the file format.
                let block = &self.blocks[0];
                kv.set("blocks", self.blocks.len());
                kv.set("parts", block.parts);
                let filters: Vec<usize> = block.part.layers.iter().map(|c| c.filters).collect();
                let kernels: Vec<usize> = block.part.layers.iter().map(|c| c.kernel).collect();
                kv.set_list("part_filters", &filters);
                kv.set_list("part_kernels", &kernels);
                kv.set("ordering", block.part.ordering);
                kv.set("wiring", block.part.wiring.as_str());
                if let Some(t) = self.transitions.first() {
                    kv.set("compression", t.compression);
                    kv.set("pool_stride", t.pool_stride);
                }
            }
        }
        kv.set_list("head", &self.head);
        kv
    }

    /// Read a model description; absent keys fall back to the preset for
    /// the declared architecture and `profile`.
    pub fn from_kv(kv: &KvConfig, profile: Profile) -> Result<Self> {
        let arch = Architecture::parse(
            kv.get("architecture").ok_or_else(|| Error::Config("missing key `architecture`".into()))?,
        )?;
        let base = ModelConfig::preset(arch, profile);
        let mut cfg = base.clone();
        if let Some(name) = kv.get("name") {
            cfg.name = name.to_string();
        }
        cfg.input_length = kv.parsed_or("input_length", base.input_length)?;
        cfg.input_channels = kv.parsed_or("input_channels", base.input_channels)?;
        if let Some(head) = kv.list("head")? {
            cfg.head = head;
        }
        match arch {
            Architecture::ClassicalCnn => {
                let filters = kv.list("conv_filters")?.unwrap_or_else(|| base.conv_layers.iter().map(|c| c.filters).collect());
                let kernels = kv.list("conv_kernels")?.unwrap_or_else(|| base.conv_layers.iter().map(|c| c.kernel).collect());
                if filters.len() != kernels.len() {
                    return Err(Error::Config("conv_filters and conv_kernels differ in length".into()));
                }
                cfg.conv_layers = filters.into_iter().zip(kernels).map(|(filters, kernel)| ConvSpec { filters, kernel }).collect();
                cfg.pool = kv.parsed_or("pool", base.pool)?;
            }
            _ => {
                let base_block = &base.blocks[0];
                let stem = base.stem.unwrap_or(ConvSpec { filters: 16, kernel: 7 });
                cfg.stem = Some(ConvSpec {
                    filters: kv.parsed_or("stem_filters", stem.filters)?,
                    kernel: kv.parsed_or("stem_kernel", stem.kernel)?,
                });
                let n_blocks: usize = kv.parsed_or("blocks", base.blocks.len())?;
                let parts = kv.parsed_or("parts", base_block.parts)?;
                let filters = kv.list("part_filters")?.unwrap_or_else(|| base_block.part.layers.iter().map(|c| c.filters).collect());
                let kernels = kv.list("part_kernels")?.unwrap_or_else(|| base_block.part.layers.iter().map(|c| c.kernel).collect());
                if filters.len() != kernels.len() {
                    return Err(Error::Config("part_filters and part_kernels differ in length".into()));
                }
                let ordering = match kv.get("ordering") {
                    Some(s) => Ordering::parse(s)?,
                    None => base_block.part.ordering,
                };
                let wiring = match kv.get("wiring") {
                    Some(s) => Wiring::parse(s)?,
                    None => base_block.part.wiring,
                };
                let part = DensePartSpec {
                    layers: filters.into_iter().zip(kernels).map(|(filters, kernel)| ConvSpec { filters, kernel }).collect(),
                    ordering,
                    wiring,
                };
                cfg.blocks = vec![DenseBlockSpec { parts, part }; n_blocks];
                let t = base.transitions.first().copied().unwrap_or_default();
                let t = TransitionSpec {
                    compression: kv.parsed_or("compression", t.compression)?,
                    pool_stride: kv.parsed_or("pool_stride", t.pool_stride)?,
                };
                cfg.transitions = vec![t; n_blocks.saturating_sub(1)];
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub const KEYS: &'static [&'static str] = &[
        "name",
        "architecture",
        "input_length",
        "input_channels",
        "conv_filters",
        "conv_kernels",
        "pool",
        "stem_filters",
        "stem_kernel",
        "blocks",
        "parts",
        "part_filters",
        "part_kernels",
        "ordering",
        "wiring",
        "compression",
        "pool_stride",
        "head",
    ];
}

/// A built network: the layer stack producing one logit per row.
pub struct Network<T> {
    config: ModelConfig,
    body: Sequential<T>,
    warnings: Vec<String>,
}

fn push_head<T: Scalar>(layers: &mut Vec<Box<dyn Layer<T>>>, mut width: usize, head: &[usize], rng: &mut InitRng) -> Result<()> {
    for (i, &out) in head.iter().enumerate() {
        layers.push(Box::new(Dense::new(width, out, rng)?));
        if i + 1 < head.len() {
            layers.push(Box::new(Relu::new()));
        }
        width = out;
    }
    Ok(())
}

/// conv -> ReLU -> avg pool per configured conv, flatten, FC head.
pub fn build_classical_cnn<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<Network<T>> {
    if cfg.architecture != Architecture::ClassicalCnn {
        return Err(Error::Config(format!("expected classical_cnn, got {}", cfg.architecture)));
    }
    cfg.validate()?;
    let mut rng = InitRng::seed_from_u64(seed);
    let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
    let (mut channels, mut length) = (cfg.input_channels, cfg.input_length);
    for conv in &cfg.conv_layers {
        layers.push(Box::new(Conv1d::new(channels, conv.filters, conv.kernel, &mut rng)?));
        layers.push(Box::new(Relu::new()));
        let pool = AvgPool1d::new(cfg.pool, cfg.pool)?;
        length = pool.output_len(length)?;
        layers.push(Box::new(pool));
        channels = conv.filters;
    }
    layers.push(Box::new(Flatten::new()));
    push_head(&mut layers, channels * length, &cfg.head, &mut rng)?;
    Ok(Network { config: cfg.clone(), body: Sequential::new(layers), warnings: Vec::new() })
}

fn build_dense<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<Network<T>> {
    cfg.validate()?;
    let mut rng = InitRng::seed_from_u64(seed);
    let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
    let (mut channels, mut length) = (cfg.input_channels, cfg.input_length);
    if let Some(stem) = cfg.stem {
        layers.push(Box::new(Conv1d::new(channels, stem.filters, stem.kernel, &mut rng)?));
        channels = stem.filters;
    }
    for (i, spec) in cfg.blocks.iter().enumerate() {
        let block = DenseBlock::new(spec.clone(), channels, &mut rng)?;
        channels = block.output_channels();
        layers.push(Box::new(block));
        if let Some(t) = cfg.transitions.get(i) {
            if t.pool_stride > length {
                return Err(Error::Config(format!("transition pooling {} exceeds length {length}", t.pool_stride)));
            }
            let transition = Transition::new(*t, channels, &mut rng)?;
            channels = transition.output_channels();
            length = t.output_length(length);
            layers.push(Box::new(transition));
        }
    }
    layers.push(Box::new(GlobalAvgPool::new()));
    push_head(&mut layers, channels, &cfg.head, &mut rng)?;

    let mut warnings = Vec::new();
    match (cfg.architecture, cfg.blocks.len()) {
        (Architecture::MultiscaleDensenet, 1) => warnings.push(
            "a single multi-scale block only extracts periodic features and tends to underfit; use two".to_string(),
        ),
        (Architecture::Densenet1d, n) if n >= 3 => {
            warnings.push(format!("{n} dense blocks tend to overfit; two are recommended"))
        }
        _ => {}
    }
    Ok(Network { config: cfg.clone(), body: Sequential::new(layers), warnings })
}

/// stem -> dense block -> transition -> dense block -> global pool -> FC.
pub fn build_densenet1d<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<Network<T>> {
    if cfg.architecture != Architecture::Densenet1d {
        return Err(Error::Config(format!("expected densenet_1d, got {}", cfg.architecture)));
    }
    build_dense(cfg, seed)
}

/// stem -> multi-scale block -> transition -> multi-scale block -> global
/// pool -> FC. A single-block config builds but carries a warning.
pub fn build_multiscale_densenet<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<Network<T>> {
    if cfg.architecture != Architecture::MultiscaleDensenet {
        return Err(Error::Config(format!("expected multiscale_densenet, got {}", cfg.architecture)));
    }
    build_dense(cfg, seed)
}

impl<T: Scalar> Network<T> {
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        match cfg.architecture {
            Architecture::ClassicalCnn => build_classical_cnn(cfg, seed),
            Architecture::Densenet1d => build_densenet1d(cfg, seed),
            Architecture::MultiscaleDensenet => build_multiscale_densenet(cfg, seed),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        self.body.layers()
    }

    pub fn summaries(&self) -> Vec<LayerSummary> {
        self.layers().iter().map(|l| l.summary()).collect()
    }

    pub fn block_summaries(&self) -> Vec<BlockSummary> {
        self.summaries()
            .into_iter()
            .filter_map(|s| match s {
                LayerSummary::Block(b) => Some(b),
                _ => None,
            })
            .collect()
    }

    /// Widths of the fully connected layers, in order.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.summaries()
            .into_iter()
            .filter_map(|s| match s {
                LayerSummary::Dense { out_features, .. } => Some(out_features),
                _ => None,
            })
            .collect()
    }

    pub fn conv_count(&self) -> usize {
        self.body.conv_count()
    }

    pub fn param_count(&self) -> usize {
        self.body.params().iter().map(|p| p.len()).sum()
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        self.body.params().iter().map(|p| p.len()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.body.params_mut()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.body.params()
    }

    pub fn zero_grad(&mut self) {
        self.body.zero_grad();
    }

    /// Flattened persistent state (parameters and running statistics).
    pub fn state_vec(&self) -> Vec<T> {
        self.body.state().into_iter().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn set_state(&mut self, values: &[T]) -> Result<()> {
        let mut slots = self.body.state_mut();
        let total: usize = slots.iter().map(|s| s.len()).sum();
        if total != values.len() {
            return Err(Error::Checkpoint(format!("state holds {total} values, got {}", values.len())));
        }
        let mut offset = 0;
        for slot in slots.iter_mut() {
            slot.copy_from_slice(&values[offset..offset + slot.len()]);
            offset += slot.len();
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, l) = x.dims3()?;
        if c != self.config.input_channels || l != self.config.input_length {
            return Err(Error::Shape(format!(
                "model expects [batch, {}, {}] input, got {:?}",
                self.config.input_channels,
                self.config.input_length,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training-mode forward pass to logits `[b, 1]`.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        self.body.forward(x)
    }

    /// Backpropagate a cotangent on the logits into parameter gradients.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        self.body.backward(grad_logits)
    }

    /// Inference-mode logits.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.body.infer(x)?.data().iter().map(|v| v.to_f64()).collect())
    }

    /// Theft probabilities in (0, 1) for each row of `x`.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid_scalar).collect())
    }

    /// [`Network::predict_proba`] over row chunks to bound memory.
    pub fn predict_proba_chunked(&self, x: &Tensor<T>, chunk: usize) -> Result<Vec<f64>> {
        let chunk = chunk.max(1);
        let mut out = Vec::with_capacity(x.batch());
        let mut start = 0;
        while start < x.batch() {
            let end = (start + chunk).min(x.batch());
            out.extend(self.predict_proba(&x.slice_batch(start, end)?)?);
            start = end;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Step;

    #[test]
    fn classical_cnn_structure() {
        let net = Network::<f32>::build(&ModelConfig::classical_cnn(), 1).unwrap();
        assert_eq!(net.conv_count(), 2);
        assert_eq!(net.dense_widths(), vec![64, 32, 1]);
        let first_fc = net.summaries().into_iter().find_map(|s| match s {
            LayerSummary::Dense { in_features, .. } => Some(in_features),
            _ => None,
        });
        assert_eq!(first_fc, Some(32 * 91));
        let p = net.predict_proba(&Tensor::zeros(&[2, 1, 365])).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn densenet1d_channel_bookkeeping() {
        let net = Network::<f32>::build(&ModelConfig::densenet1d(), 1).unwrap();
        let blocks = net.block_summaries();
        assert_eq!(blocks.len(), 2);
        assert_eq!((blocks[0].input_channels, blocks[0].output_channels), (16, 208));
        assert_eq!((blocks[1].input_channels, blocks[1].output_channels), (104, 296));
        for entry in blocks.iter().flat_map(|b| &b.wiring) {
            let expected = if entry.index_in_part == 0 { (128, 1) } else { (32, 3) };
            assert_eq!((entry.filters, entry.kernel), expected);
        }
    }

    #[test]
    fn three_block_densenet_warns() {
        let mut cfg = ModelConfig::preset(Architecture::Densenet1d, Profile::Desk);
        cfg.blocks.push(cfg.blocks[0].clone());
        cfg.transitions.push(TransitionSpec::default());
        let net = Network::<f32>::build(&cfg, 1).unwrap();
        assert_eq!(net.block_summaries().len(), 3);
        assert!(!net.warnings().is_empty());
    }

    #[test]
    fn multiscale_structure() {
        let net = Network::<f32>::build(&ModelConfig::multiscale_densenet(), 1).unwrap();
        let blocks = net.block_summaries();
        assert_eq!(blocks.len(), 2);
        assert!(blocks.iter().all(|b| b.conv_layers == 24 && b.multiscale));
        assert_eq!(blocks[0].output_channels, 1120);
        assert_eq!(blocks[1].input_channels, 560);
        assert!(blocks.iter().all(|b| b.ordering.steps()[0] == Step::Conv));
        assert!(net.warnings().is_empty());
    }

    #[test]
    fn single_multiscale_block_warns() {
        let mut cfg = ModelConfig::preset(Architecture::MultiscaleDensenet, Profile::Desk);
        cfg.blocks.truncate(1);
        cfg.transitions.clear();
        let net = Network::<f32>::build(&cfg, 1).unwrap();
        assert_eq!(net.warnings().len(), 1);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::multiscale_densenet();
        cfg.transitions.clear();
        assert!(Network::<f32>::build(&cfg, 1).is_err());
        let mut cfg = ModelConfig::classical_cnn();
        cfg.head = vec![64, 32];
        assert!(Network::<f32>::build(&cfg, 1).is_err());
        assert!(build_densenet1d::<f32>(&ModelConfig::classical_cnn(), 1).is_err());
    }

    #[test]
    fn same_config_same_parameter_layout() {
        for arch in [Architecture::ClassicalCnn, Architecture::Densenet1d, Architecture::MultiscaleDensenet] {
            let cfg = ModelConfig::preset(arch, Profile::Desk);
            let a = Network::<f32>::build(&cfg, 3).unwrap();
            let b = Network::<f32>::build(&cfg, 3).unwrap();
            assert_eq!(a.param_shapes(), b.param_shapes());
            assert_eq!(a.param_count(), b.param_count());
            assert_eq!(a.state_vec(), b.state_vec());
        }
    }

    #[test]
    fn kv_round_trip_for_presets() {
        for profile in [Profile::Paper, Profile::Desk] {
            for arch in [Architecture::ClassicalCnn, Architecture::Densenet1d, Architecture::MultiscaleDensenet] {
                let cfg = ModelConfig::preset(arch, profile);
                let text = cfg.to_kv().to_text();
                let back = ModelConfig::from_kv(&KvConfig::parse(&text).unwrap(), Profile::Paper).unwrap();
                assert_eq!(back, cfg);
            }
        }
    }

    #[test]
    fn wrong_input_length_is_a_shape_error() {
        let net = Network::<f32>::build(&ModelConfig::classical_cnn(), 1).unwrap();
        assert!(matches!(net.predict_proba(&Tensor::zeros(&[1, 1, 364])), Err(Error::Shape(_))));
    }

    #[test]
    fn inference_is_pure_and_row_consistent() {
        let cfg = ModelConfig::preset(Architecture::MultiscaleDensenet, Profile::Desk);
        let net = Network::<f32>::build(&cfg, 5).unwrap();
        let before = net.state_vec();
        let rows: Vec<Vec<f32>> = (0..3).map(|r| (0..365).map(|t| ((t * (r + 1)) as f32 * 0.05).sin()).collect()).collect();
        let mut with_dup = rows.clone();
        with_dup.push(rows[0].clone());
        let x = Tensor::from_series(&with_dup).unwrap();
        let batch = net.predict_proba(&x).unwrap();
        assert_eq!(batch[0], batch[3]);
        for (r, row) in rows.iter().enumerate() {
            let single = net.predict_proba(&Tensor::from_series(&[row.clone()]).unwrap()).unwrap();
            assert!((single[0] - batch[r]).abs() < 1e-6);
        }
        assert_eq!(before, net.state_vec());
    }
}
