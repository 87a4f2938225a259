use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::{missing_cache, Layer, LayerSummary, Param};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

struct Cache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
}

/// Per-channel batch normalization over the batch and length axes.
///
/// Training mode normalizes with the batch statistics and moves the running
/// statistics by `momentum`; inference uses the running statistics.
pub struct BatchNorm1d<T> {
    channels: usize,
    gamma: Param<T>,
    beta: Param<T>,
    running_mean: Vec<T>,
    running_var: Vec<T>,
    epsilon: f64,
    momentum: f64,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm1d {
            channels,
            gamma: Param::new(vec![T::ONE; channels]),
            beta: Param::zeros(channels),
            running_mean: vec![T::ZERO; channels],
            running_var: vec![T::ONE; channels],
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn gamma_mut(&mut self) -> &mut [T] {
        &mut self.gamma.value
    }

    pub fn beta_mut(&mut self) -> &mut [T] {
        &mut self.beta.value
    }

    pub fn running_mean(&self) -> &[T] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[T] {
        &self.running_var
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn check(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (b, c, l) = x.dims3()?;
        if c != self.channels {
            return Err(Error::Config(format!("batch norm expects {} channels, got {c}", self.channels)));
        }
        Ok((b, c, l))
    }
}

impl<T: Scalar> Layer<T> for BatchNorm1d<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, l) = self.check(x)?;
        let count = b * l;
        if count < 2 {
            return Err(Error::DegenerateBatch(count));
        }
        let n = count as f64;
        let mut out = vec![T::ZERO; x.len()];
        let mut xhat = vec![T::ZERO; x.len()];
        let mut inv_std = vec![T::ZERO; c];
        let data = x.data();
        for ch in 0..c {
            // Statistics accumulate in f64 regardless of T.
            let mut sum = 0.0;
            for s in 0..b {
                sum += data[(s * c + ch) * l..(s * c + ch + 1) * l].iter().map(|v| v.to_f64()).sum::<f64>();
            }
            let mean = sum / n;
            let mut sq = 0.0;
            for s in 0..b {
                sq += data[(s * c + ch) * l..(s * c + ch + 1) * l]
                    .iter()
                    .map(|v| (v.to_f64() - mean).powi(2))
                    .sum::<f64>();
            }
            let var = sq / n;
            let istd = 1.0 / (var + self.epsilon).sqrt();
            inv_std[ch] = T::of(istd);
            let (g, bt) = (self.gamma.value[ch], self.beta.value[ch]);
            for s in 0..b {
                for i in (s * c + ch) * l..(s * c + ch + 1) * l {
                    let h = T::of((data[i].to_f64() - mean) * istd);
                    xhat[i] = h;
                    out[i] = g * h + bt;
                }
            }
            let m = self.momentum;
            self.running_mean[ch] = T::of((1.0 - m) * self.running_mean[ch].to_f64() + m * mean);
            let unbiased = var * n / (n - 1.0);
            self.running_var[ch] = T::of((1.0 - m) * self.running_var[ch].to_f64() + m * unbiased);
        }
        self.cache = Some(Cache { xhat, inv_std, shape: x.shape().to_vec() });
        Tensor::new(x.shape().to_vec(), out)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, l) = self.check(x)?;
        let mut out = x.data().to_vec();
        for ch in 0..c {
            let istd = T::of(1.0 / (self.running_var[ch].to_f64() + self.epsilon).sqrt());
            let scale = self.gamma.value[ch] * istd;
            let shift = self.beta.value[ch] - self.running_mean[ch] * scale;
            for s in 0..b {
                for v in &mut out[(s * c + ch) * l..(s * c + ch + 1) * l] {
                    *v = *v * scale + shift;
                }
            }
        }
        Tensor::new(x.shape().to_vec(), out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(missing_cache)?;
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(Error::Shape(format!(
                "batch norm cotangent {:?} does not match input {:?}",
                grad_out.shape(),
                cache.shape
            )));
        }
        let (b, c, l) = (cache.shape[0], cache.shape[1], cache.shape[2]);
        let n = T::of((b * l) as f64);
        let g = grad_out.data();
        let mut gx = vec![T::ZERO; g.len()];
        for ch in 0..c {
            let mut sum_g = T::ZERO;
            let mut sum_gx = T::ZERO;
            for s in 0..b {
                for i in (s * c + ch) * l..(s * c + ch + 1) * l {
                    sum_g += g[i];
                    sum_gx += g[i] * cache.xhat[i];
                }
            }
            self.beta.grad[ch] += sum_g;
            self.gamma.grad[ch] += sum_gx;
            let gamma = self.gamma.value[ch];
            let k = gamma * cache.inv_std[ch] / n;
            for s in 0..b {
                for i in (s * c + ch) * l..(s * c + ch + 1) * l {
                    gx[i] = k * (n * g[i] - sum_g - cache.xhat[i] * sum_gx);
                }
            }
        }
        Tensor::new(cache.shape, gx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn state(&self) -> Vec<&[T]> {
        vec![&self.gamma.value, &self.beta.value, &self.running_mean, &self.running_var]
    }

    fn state_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            &mut self.gamma.value,
            &mut self.beta.value,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::BatchNorm { channels: self.channels }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{check_layer, random_tensor};

    #[test]
    fn constant_input_collapses_to_beta() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        let y = bn.forward(&Tensor::full(&[2, 1, 5], 3.25)).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut bn = BatchNorm1d::<f64>::new(2);
        bn.gamma_mut().copy_from_slice(&[0.0, 0.0]);
        bn.beta_mut().copy_from_slice(&[0.5, -1.5]);
        let y = bn.forward(&random_tensor(&[3, 2, 4], 1)).unwrap();
        for s in 0..3 {
            assert!(y.data()[s * 8..s * 8 + 4].iter().all(|&v| v == 0.5));
            assert!(y.data()[s * 8 + 4..s * 8 + 8].iter().all(|&v| v == -1.5));
        }
    }

    #[test]
    fn two_point_batch_normalizes_to_unit() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        let y = bn.forward(&Tensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap()).unwrap();
        let expected = 1.0 / (1.0 + BN_EPSILON).sqrt();
        assert!((y.data()[0] + expected).abs() < 1e-12);
        assert!((y.data()[1] - expected).abs() < 1e-12);
        assert!((y.data()[0] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn training_output_is_standardized() {
        let mut bn = BatchNorm1d::<f64>::new(3);
        let x = random_tensor(&[4, 3, 50], 7).map(|v| 5.0 * v + 2.0);
        let y = bn.forward(&x).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4).flat_map(|s| y.data()[(s * 3 + ch) * 50..(s * 3 + ch + 1) * 50].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn degenerate_batch_rejected() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        assert!(matches!(bn.forward(&Tensor::zeros(&[1, 1, 1])), Err(Error::DegenerateBatch(1))));
    }

    #[test]
    fn running_stats_move_and_drive_inference() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        let x = Tensor::new(vec![1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        bn.forward(&x).unwrap();
        assert!((bn.running_mean()[0] - 0.25).abs() < 1e-12);
        // unbiased var of 1..4 is 5/3
        assert!((bn.running_var()[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        let before = (bn.running_mean()[0], bn.running_var()[0]);
        let y = bn.infer(&x).unwrap();
        assert_eq!(before, (bn.running_mean()[0], bn.running_var()[0]));
        let expected = (2.0 - before.0) / (before.1 + BN_EPSILON).sqrt();
        assert!((y.data()[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..4 {
            let mut bn = BatchNorm1d::<f64>::new(2);
            bn.gamma_mut().copy_from_slice(&[1.3, -0.7]);
            bn.beta_mut().copy_from_slice(&[0.2, 0.1]);
            check_layer(&mut bn, &random_tensor(&[3, 2, 4], seed), seed);
        }
    }
}
