//! Dense blocks, multi-scale dense blocks and transition layers.
//!
//! A block keeps a running feature map: the block input followed by every
//! exported layer output so far. Layers that read "the concatenation" see a
//! prefix of that map, which is exactly the union of the block input and all
//! previously exported outputs.

use std::fmt;

use crate::error::{Error, Result};
use crate::nn::{AvgPool1d, BatchNorm1d, Conv1d, InitRng, Layer, LayerSummary, Param, Relu, Step};
use crate::tensor::{add_into_channels, channel_range, write_channels, Scalar, Tensor};

/// Order of the three transformations inside a convolution unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ordering {
    /// Batch norm, ReLU, then convolution (classical dense block).
    BnReluConv,
    /// Convolution, batch norm, then ReLU (multi-scale block default).
    ConvBnRelu,
}

impl Ordering {
    pub fn steps(self) -> [Step; 3] {
        match self {
            Ordering::BnReluConv => [Step::BatchNorm, Step::Relu, Step::Conv],
            Ordering::ConvBnRelu => [Step::Conv, Step::BatchNorm, Step::Relu],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ordering::BnReluConv => "bn_relu_conv",
            Ordering::ConvBnRelu => "conv_bn_relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bn_relu_conv" => Ok(Ordering::BnReluConv),
            "conv_bn_relu" => Ok(Ordering::ConvBnRelu),
            other => Err(Error::Config(format!("unknown ordering {other:?}"))),
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the layers of one part are connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Wiring {
    /// Layers form a chain fed by the running concatenation; only the last
    /// layer's output is exported (1x1 bottleneck followed by k=3).
    Bottleneck,
    /// Every layer reads the running concatenation and exports its output.
    Dense,
}

impl Wiring {
    pub fn as_str(self) -> &'static str {
        match self {
            Wiring::Bottleneck => "bottleneck",
            Wiring::Dense => "dense",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bottleneck" => Ok(Wiring::Bottleneck),
            "dense" => Ok(Wiring::Dense),
            other => Err(Error::Config(format!("unknown wiring {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DensePartSpec {
    pub layers: Vec<ConvSpec>,
    pub ordering: Ordering,
    pub wiring: Wiring,
}

impl DensePartSpec {
    /// conv(128, k=1) bottleneck then conv(32, k=3); exports 32 maps.
    pub fn standard() -> Self {
        DensePartSpec {
            layers: vec![ConvSpec { filters: 128, kernel: 1 }, ConvSpec { filters: 32, kernel: 3 }],
            ordering: Ordering::BnReluConv,
            wiring: Wiring::Bottleneck,
        }
    }

    /// Four convolutions with kernels 30/14/7/3 (monthly, biweekly, weekly,
    /// short-term) and 64/48/40/32 maps.
    pub fn multiscale() -> Self {
        DensePartSpec::multiscale_with(&[64, 48, 40, 32], &[30, 14, 7, 3])
    }

    pub fn multiscale_with(filters: &[usize], kernels: &[usize]) -> Self {
        DensePartSpec {
            layers: filters.iter().zip(kernels).map(|(&filters, &kernel)| ConvSpec { filters, kernel }).collect(),
            ordering: Ordering::ConvBnRelu,
            wiring: Wiring::Dense,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("a dense part needs at least one layer".into()));
        }
        if let Some(bad) = self.layers.iter().find(|l| l.filters == 0 || l.kernel == 0) {
            return Err(Error::Config(format!("layer {bad:?} has a zero filter count or kernel")));
        }
        if self.wiring == Wiring::Dense && self.layers.windows(2).any(|w| w[1].kernel >= w[0].kernel) {
            let kernels: Vec<usize> = self.layers.iter().map(|l| l.kernel).collect();
            return Err(Error::Config(format!(
                "multi-scale kernel lengths must strictly decrease, got {kernels:?}"
            )));
        }
        Ok(())
    }

    /// Channels appended to the running concatenation by one part.
    pub fn exported_channels(&self) -> usize {
        match self.wiring {
            Wiring::Bottleneck => self.layers.last().map_or(0, |l| l.filters),
            Wiring::Dense => self.layers.iter().map(|l| l.filters).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DenseBlockSpec {
    pub parts: usize,
    pub part: DensePartSpec,
}

impl DenseBlockSpec {
    pub fn standard() -> Self {
        DenseBlockSpec { parts: 6, part: DensePartSpec::standard() }
    }

    /// 6 parts x 4 layers = 24 convolutions.
    pub fn multiscale() -> Self {
        DenseBlockSpec { parts: 6, part: DensePartSpec::multiscale() }
    }

    pub fn conv_layers(&self) -> usize {
        self.parts * self.part.layers.len()
    }

    pub fn output_channels(&self, input_channels: usize) -> usize {
        input_channels + self.parts * self.part.exported_channels()
    }

    pub fn is_multiscale(&self) -> bool {
        self.part.wiring == Wiring::Dense
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSpec {
    pub compression: f64,
    pub pool_stride: usize,
}

impl Default for TransitionSpec {
    fn default() -> Self {
        TransitionSpec { compression: 0.5, pool_stride: 1 }
    }
}

impl TransitionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return Err(Error::Config(format!("compression {} outside (0, 1]", self.compression)));
        }
        if self.pool_stride == 0 {
            return Err(Error::Config("transition pool stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn output_channels(&self, input_channels: usize) -> usize {
        ((self.compression * input_channels as f64).ceil() as usize).max(1)
    }

    pub fn output_length(&self, length: usize) -> usize {
        if self.pool_stride > 1 {
            (length - self.pool_stride) / self.pool_stride + 1
        } else {
            length
        }
    }
}

/// Where a layer's input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    BlockInput,
    /// Output of the layer with this index within the block.
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WiringEntry {
    pub part: usize,
    pub index_in_part: usize,
    pub sources: Vec<Source>,
    pub input_channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub exported: bool,
}

/// Connection table of a block: one entry per convolution layer, in
/// execution order.
pub fn wiring_table(spec: &DenseBlockSpec, input_channels: usize) -> Vec<WiringEntry> {
    let mut table: Vec<WiringEntry> = Vec::new();
    let mut concat = vec![Source::BlockInput];
    let mut concat_width = input_channels;
    for part in 0..spec.parts {
        let mut chain: Option<(usize, usize)> = None;
        for (i, layer) in spec.part.layers.iter().enumerate() {
            let idx = table.len();
            let (sources, width) = match (spec.part.wiring, chain) {
                (Wiring::Bottleneck, Some((prev, w))) => (vec![Source::Layer(prev)], w),
                _ => (concat.clone(), concat_width),
            };
            let exported = match spec.part.wiring {
                Wiring::Dense => true,
                Wiring::Bottleneck => i + 1 == spec.part.layers.len(),
            };
            table.push(WiringEntry {
                part,
                index_in_part: i,
                sources,
                input_channels: width,
                filters: layer.filters,
                kernel: layer.kernel,
                exported,
            });
            chain = Some((idx, layer.filters));
            if exported {
                concat.push(Source::Layer(idx));
                concat_width += layer.filters;
            }
        }
    }
    table
}

/// Convolution + batch norm + ReLU applied in a configurable order.
pub struct ConvUnit<T> {
    ordering: Ordering,
    conv: Conv1d<T>,
    bn: BatchNorm1d<T>,
    relu: Relu<T>,
    last_trace: Vec<Step>,
}

impl<T: Scalar> ConvUnit<T> {
    pub fn new(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        ordering: Ordering,
        rng: &mut InitRng,
    ) -> Result<Self> {
        let bn_channels = match ordering {
            Ordering::BnReluConv => in_channels,
            Ordering::ConvBnRelu => filters,
        };
        Ok(ConvUnit {
            ordering,
            conv: Conv1d::new(in_channels, filters, kernel, rng)?,
            bn: BatchNorm1d::new(bn_channels),
            relu: Relu::new(),
            last_trace: Vec::new(),
        })
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    /// Steps executed by the most recent training forward pass.
    pub fn last_trace(&self) -> &[Step] {
        &self.last_trace
    }
}

impl<T: Scalar> Layer<T> for ConvUnit<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.last_trace.clear();
        let mut h = x.clone();
        for step in self.ordering.steps() {
            h = match step {
                Step::Conv => self.conv.forward(&h)?,
                Step::BatchNorm => self.bn.forward(&h)?,
                Step::Relu => self.relu.forward(&h)?,
            };
            self.last_trace.push(step);
        }
        Ok(h)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for step in self.ordering.steps() {
            h = match step {
                Step::Conv => self.conv.infer(&h)?,
                Step::BatchNorm => self.bn.infer(&h)?,
                Step::Relu => self.relu.infer(&h)?,
            };
        }
        Ok(h)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for step in self.ordering.steps().iter().rev() {
            g = match step {
                Step::Conv => self.conv.backward(&g)?,
                Step::BatchNorm => self.bn.backward(&g)?,
                Step::Relu => self.relu.backward(&g)?,
            };
        }
        Ok(g)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.conv.params_mut();
        p.extend(self.bn.params_mut());
        p
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.conv.params();
        p.extend(self.bn.params());
        p
    }

    fn state(&self) -> Vec<&[T]> {
        let mut s = self.conv.state();
        s.extend(self.bn.state());
        s
    }

    fn state_mut(&mut self) -> Vec<&mut [T]> {
        let mut s = self.conv.state_mut();
        s.extend(self.bn.state_mut());
        s
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::Unit {
            steps: self.ordering.steps().to_vec(),
            in_channels: self.conv.in_channels(),
            filters: self.conv.out_channels(),
            kernel: self.conv.kernel(),
        }
    }

    fn conv_count(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSummary {
    pub multiscale: bool,
    pub parts: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    pub conv_layers: usize,
    pub wiring: Vec<WiringEntry>,
    pub ordering: Ordering,
}

/// Dense or multi-scale dense block.
pub struct DenseBlock<T> {
    spec: DenseBlockSpec,
    input_channels: usize,
    wiring: Vec<WiringEntry>,
    units: Vec<ConvUnit<T>>,
    input_shape: Option<Vec<usize>>,
}

impl<T: Scalar> DenseBlock<T> {
    pub fn new(spec: DenseBlockSpec, input_channels: usize, rng: &mut InitRng) -> Result<Self> {
        spec.part.validate()?;
        if input_channels == 0 {
            return Err(Error::Config("dense block input needs at least one channel".into()));
        }
        let wiring = wiring_table(&spec, input_channels);
        let units = wiring
            .iter()
            .map(|w| ConvUnit::new(w.input_channels, w.filters, w.kernel, spec.part.ordering, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(DenseBlock { spec, input_channels, wiring, units, input_shape: None })
    }

    pub fn spec(&self) -> &DenseBlockSpec {
        &self.spec
    }

    pub fn output_channels(&self) -> usize {
        self.spec.output_channels(self.input_channels)
    }

    pub fn wiring(&self) -> &[WiringEntry] {
        &self.wiring
    }

    pub fn units(&self) -> &[ConvUnit<T>] {
        &self.units
    }

    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        let (b, c, l) = x.dims3()?;
        if c != self.input_channels {
            return Err(Error::Config(format!(
                "dense block expects {} channels, got {c}",
                self.input_channels
            )));
        }
        Ok((b, l))
    }

}

impl WiringEntry {
    /// True when the layer reads the running concatenation rather than the
    /// previous layer of a bottleneck chain.
    pub fn reads_concat(&self) -> bool {
        self.sources.first() == Some(&Source::BlockInput)
    }
}

/// Push `x` through the wiring table, calling `apply(layer_index, input)`
/// for each convolution unit.
fn propagate<T: Scalar>(
    wiring: &[WiringEntry],
    output_channels: usize,
    x: &Tensor<T>,
    mut apply: impl FnMut(usize, &Tensor<T>) -> Result<Tensor<T>>,
) -> Result<Tensor<T>> {
    let (b, c, l) = x.dims3()?;
    let mut feat = Tensor::zeros(&[b, output_channels, l]);
    write_channels(&mut feat, 0, x)?;
    let mut width = c;
    let mut chained: Option<Tensor<T>> = None;
    for (idx, entry) in wiring.iter().enumerate() {
        let input = if entry.reads_concat() {
            channel_range(&feat, 0, entry.input_channels)?
        } else {
            chained.take().ok_or_else(|| Error::Config("bottleneck chain is broken".into()))?
        };
        if input.shape()[1] != entry.input_channels {
            return Err(Error::Config("dense block channel bookkeeping mismatch".into()));
        }
        let y = apply(idx, &input)?;
        if entry.exported {
            write_channels(&mut feat, width, &y)?;
            width += entry.filters;
        } else {
            chained = Some(y);
        }
    }
    Ok(feat)
}

impl<T: Scalar> Layer<T> for DenseBlock<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let units = &mut self.units;
        let y = propagate(&self.wiring, self.spec.output_channels(self.input_channels), x, |i, h| {
            units[i].forward(h)
        })?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        propagate(&self.wiring, self.output_channels(), x, |i, h| self.units[i].infer(h))
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.take().ok_or_else(crate::nn::missing_cache)?;
        let (b, l) = (shape[0], shape[2]);
        if grad_out.shape() != [b, self.output_channels(), l] {
            return Err(Error::Shape("dense block cotangent shape mismatch".into()));
        }
        let mut gfeat = grad_out.clone();
        // Output offsets of exported layers in the running map.
        let mut offsets = vec![0; self.wiring.len()];
        let mut width = self.input_channels;
        for (i, entry) in self.wiring.iter().enumerate() {
            if entry.exported {
                offsets[i] = width;
                width += entry.filters;
            }
        }
        let mut chained: Option<Tensor<T>> = None;
        for idx in (0..self.wiring.len()).rev() {
            let entry = &self.wiring[idx];
            let g = if entry.exported {
                channel_range(&gfeat, offsets[idx], offsets[idx] + entry.filters)?
            } else {
                chained.take().ok_or_else(|| Error::Config("bottleneck gradient missing".into()))?
            };
            let gin = self.units[idx].backward(&g)?;
            if entry.reads_concat() {
                add_into_channels(&mut gfeat, 0, &gin)?;
            } else {
                chained = Some(gin);
            }
        }
        channel_range(&gfeat, 0, self.input_channels)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.units.iter_mut().flat_map(|u| u.params_mut()).collect()
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.units.iter().flat_map(|u| u.params()).collect()
    }

    fn state(&self) -> Vec<&[T]> {
        self.units.iter().flat_map(|u| u.state()).collect()
    }

    fn state_mut(&mut self) -> Vec<&mut [T]> {
        self.units.iter_mut().flat_map(|u| u.state_mut()).collect()
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::Block(BlockSummary {
            multiscale: self.spec.is_multiscale(),
            parts: self.spec.parts,
            input_channels: self.input_channels,
            output_channels: self.output_channels(),
            conv_layers: self.units.len(),
            wiring: self.wiring.clone(),
            ordering: self.spec.part.ordering,
        })
    }

    fn conv_count(&self) -> usize {
        self.units.len()
    }
}

/// BN -> ReLU -> conv(k=1) to the compressed width, then optional average
/// pooling with window = stride.
pub struct Transition<T> {
    spec: TransitionSpec,
    in_channels: usize,
    bn: BatchNorm1d<T>,
    relu: Relu<T>,
    conv: Conv1d<T>,
    pool: Option<AvgPool1d<T>>,
}

impl<T: Scalar> Transition<T> {
    pub fn new(spec: TransitionSpec, in_channels: usize, rng: &mut InitRng) -> Result<Self> {
        spec.validate()?;
        let out = spec.output_channels(in_channels);
        let pool = if spec.pool_stride > 1 { Some(AvgPool1d::new(spec.pool_stride, spec.pool_stride)?) } else { None };
        Ok(Transition {
            spec,
            in_channels,
            bn: BatchNorm1d::new(in_channels),
            relu: Relu::new(),
            conv: Conv1d::new(in_channels, out, 1, rng)?,
            pool,
        })
    }

    pub fn output_channels(&self) -> usize {
        self.conv.out_channels()
    }
}

impl<T: Scalar> Layer<T> for Transition<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.bn.forward(x)?;
        let h = self.relu.forward(&h)?;
        let h = self.conv.forward(&h)?;
        match &mut self.pool {
            Some(p) => p.forward(&h),
            None => Ok(h),
        }
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.conv.infer(&self.relu.infer(&self.bn.infer(x)?)?)?;
        match &self.pool {
            Some(p) => p.infer(&h),
            None => Ok(h),
        }
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = match &mut self.pool {
            Some(p) => p.backward(grad_out)?,
            None => grad_out.clone(),
        };
        let g = self.conv.backward(&g)?;
        let g = self.relu.backward(&g)?;
        self.bn.backward(&g)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.bn.params_mut();
        p.extend(self.conv.params_mut());
        p
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.bn.params();
        p.extend(self.conv.params());
        p
    }

    fn state(&self) -> Vec<&[T]> {
        let mut s = self.bn.state();
        s.extend(self.conv.state());
        s
    }

    fn state_mut(&mut self) -> Vec<&mut [T]> {
        let mut s = self.bn.state_mut();
        s.extend(self.conv.state_mut());
        s
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::Transition {
            in_channels: self.in_channels,
            out_channels: self.output_channels(),
            pool_stride: self.spec.pool_stride,
        }
    }

    fn conv_count(&self) -> usize {
        1
    }
}
