use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::{missing_cache, Layer, LayerSummary};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Numerically stable logistic function.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::of(sigmoid_scalar(v.to_f64())))
}

#[derive(Default)]
pub struct Relu<T> {
    mask: Option<Vec<bool>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu { mask: None, _marker: std::marker::PhantomData }
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.mask = Some(x.data().iter().map(|&v| v > T::ZERO).collect());
        Ok(relu(x))
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(relu(x))
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.take().ok_or_else(missing_cache)?;
        if mask.len() != grad_out.len() {
            return Err(Error::Shape("relu cotangent size mismatch".into()));
        }
        let data = grad_out.data().iter().zip(&mask).map(|(&g, &m)| if m { g } else { T::ZERO }).collect();
        Tensor::new(grad_out.shape().to_vec(), data)
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::Relu
    }
}
