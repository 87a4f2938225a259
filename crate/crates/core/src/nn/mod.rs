//! Layer primitives with exact forward and reverse-mode passes.
//!
//! Every layer caches what it needs during [`Layer::forward`] (training mode)
//! and consumes that cache in [`Layer::backward`], which returns the gradient
//! with respect to the layer input and accumulates parameter gradients.
//! [`Layer::infer`] is the side-effect-free inference path.

mod activation;
mod conv;
mod kernels;
mod linear;
mod loss;
mod norm;
mod pool;

pub use activation::{relu, sigmoid, sigmoid_scalar, Relu};
pub use conv::{conv1d, conv1d_backward, Conv1d, ConvGrads};
pub use linear::{fully_connected, Dense, Flatten};
pub use loss::{bce_loss, bce_with_logits, PROB_CLIP};
pub use norm::{BatchNorm1d, BN_EPSILON, BN_MOMENTUM};
pub use pool::{avg_pool1d, global_avg_pool, AvgPool1d, GlobalAvgPool};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Seeded generator used for parameter initialization.
pub type InitRng = ChaCha8Rng;

/// A learnable parameter with its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Vec<T>) -> Self {
        let grad = vec![T::ZERO; value.len()];
        Param { value, grad }
    }

    pub fn zeros(n: usize) -> Self {
        Param::new(vec![T::ZERO; n])
    }

    /// He-style uniform(-s, s) with s = sqrt(6 / fan_in).
    pub fn he_uniform(n: usize, fan_in: usize, rng: &mut InitRng) -> Self {
        let s = (6.0 / fan_in as f64).sqrt();
        Param::new((0..n).map(|_| T::of(rng.random_range(-s..s))).collect())
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::ZERO);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// One transformation inside a convolution unit, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Conv,
    BatchNorm,
    Relu,
}

/// Structural description of a layer, used for introspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSummary {
    Conv { in_channels: usize, filters: usize, kernel: usize },
    BatchNorm { channels: usize },
    Relu,
    AvgPool { window: usize, stride: usize },
    GlobalAvgPool,
    Flatten,
    Dense { in_features: usize, out_features: usize },
    Block(crate::blocks::BlockSummary),
    Transition { in_channels: usize, out_channels: usize, pool_stride: usize },
    Unit { steps: Vec<Step>, in_channels: usize, filters: usize, kernel: usize },
}

pub trait Layer<T: Scalar>: Send + Sync {
    /// Training-mode forward pass; caches activations for `backward`.
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;

    /// Inference-mode forward pass. Never mutates the layer.
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    /// Gradient w.r.t. the input of the last `forward` call. Parameter
    /// gradients are accumulated (not overwritten).
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    /// Everything persisted in a checkpoint (parameters, then running
    /// statistics), in declaration order.
    fn state(&self) -> Vec<&[T]> {
        self.params().into_iter().map(|p| p.value.as_slice()).collect()
    }

    fn state_mut(&mut self) -> Vec<&mut [T]> {
        self.params_mut().into_iter().map(|p| p.value.as_mut_slice()).collect()
    }

    fn summary(&self) -> LayerSummary;

    /// Number of convolution layers contained in this layer.
    fn conv_count(&self) -> usize {
        0
    }
}

/// A stack of layers applied in order.
pub struct Sequential<T> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Sequential { layers }
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

impl<T: Scalar> Layer<T> for Sequential<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn state(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.state()).collect()
    }

    fn state_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.state_mut()).collect()
    }

    fn summary(&self) -> LayerSummary {
        // A sequential stack has no single summary; report its first layer.
        self.layers.first().map(|l| l.summary()).unwrap_or(LayerSummary::Flatten)
    }

    fn conv_count(&self) -> usize {
        self.layers.iter().map(|l| l.conv_count()).sum()
    }
}

pub(crate) fn missing_cache() -> crate::error::Error {
    crate::error::Error::Config("backward called without a preceding training forward".into())
}

#[cfg(test)]
pub(crate) mod testutil {
    //! Central finite-difference oracle used by the layer unit tests.

    use super::*;
    use rand::SeedableRng;

    pub const H: f64 = 1e-5;

    pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = InitRng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    pub fn close(analytic: f64, numeric: f64) -> bool {
        let diff = (analytic - numeric).abs();
        diff < 1e-9 || diff <= 1e-4 * analytic.abs().max(numeric.abs())
    }

    /// Check input and parameter gradients of `layer` under the scalar loss
    /// `sum(r * layer(x))` for a fixed random cotangent `r`.
    pub fn check_layer(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, seed: u64) {
        let y = layer.forward(x).unwrap();
        let r = random_tensor(y.shape(), seed ^ 0xabcd);
        let loss = |layer: &mut dyn Layer<f64>, x: &Tensor<f64>| -> f64 {
            let y = layer.forward(x).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };

        for p in layer.params_mut() {
            p.zero_grad();
        }
        layer.forward(x).unwrap();
        let gx = layer.backward(&r).unwrap();
        let grads: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();

        let mut xp = x.clone();
        for i in 0..x.len() {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + H;
            let lp = loss(layer, &xp);
            xp.data_mut()[i] = orig - H;
            let lm = loss(layer, &xp);
            xp.data_mut()[i] = orig;
            let num = (lp - lm) / (2.0 * H);
            assert!(close(gx.data()[i], num), "input grad {i}: {} vs {num}", gx.data()[i]);
        }

        for (pi, grad) in grads.iter().enumerate() {
            for i in 0..grad.len() {
                let orig = layer.params_mut()[pi].value[i];
                layer.params_mut()[pi].value[i] = orig + H;
                let lp = loss(layer, x);
                layer.params_mut()[pi].value[i] = orig - H;
                let lm = loss(layer, x);
                layer.params_mut()[pi].value[i] = orig;
                let num = (lp - lm) / (2.0 * H);
                assert!(close(grad[i], num), "param {pi}[{i}]: {} vs {num}", grad[i]);
            }
        }
    }
}
