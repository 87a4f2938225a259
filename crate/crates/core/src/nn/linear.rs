use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::{missing_cache, InitRng, Layer, LayerSummary, Param};

/// Affine map `y = x W^T + b` with `W` stored `[out, in]` row-major.
pub fn fully_connected<T: Scalar>(x: &Tensor<T>, weights: &[T], bias: &[T]) -> Result<Tensor<T>> {
    let (b, f) = x.dims2()?;
    let out = bias.len();
    if weights.len() != out * f {
        return Err(Error::Config(format!(
            "fully connected layer has {} weights, expected {out}x{f}",
            weights.len()
        )));
    }
    let mut y: Vec<T> = (0..b).flat_map(|_| bias.iter().copied()).collect();
    // SAFETY: x is [b x f], W^T is read as [f x out] via strides (1, f),
    // y is [b x out]; all distinct allocations.
    unsafe {
        T::gemm(
            b,
            f,
            out,
            T::ONE,
            x.data().as_ptr(),
            f as isize,
            1,
            weights.as_ptr(),
            1,
            f as isize,
            T::ONE,
            y.as_mut_ptr(),
            out as isize,
            1,
        );
    }
    Tensor::new(vec![b, out], y)
}

pub struct Dense<T> {
    in_features: usize,
    out_features: usize,
    weight: Param<T>,
    bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut InitRng) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::Config("fully connected layer with zero width".into()));
        }
        Ok(Dense {
            in_features,
            out_features,
            weight: Param::he_uniform(in_features * out_features, in_features, rng),
            bias: Param::zeros(out_features),
            input: None,
        })
    }

    pub fn from_weights(in_features: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weights.len() != in_features * bias.len() || bias.is_empty() {
            return Err(Error::Config("fully connected weight/bias sizes are inconsistent".into()));
        }
        Ok(Dense { in_features, out_features: bias.len(), weight: Param::new(weights), bias: Param::new(bias), input: None })
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let (_, f) = x.dims2()?;
        if f != self.in_features {
            return Err(Error::Config(format!(
                "fully connected layer expects {} features, got {f}",
                self.in_features
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        fully_connected(x, &self.weight.value, &self.bias.value)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(missing_cache)?;
        let (b, f) = x.dims2()?;
        let out = self.out_features;
        if grad_out.shape() != [b, out] {
            return Err(Error::Shape("fully connected cotangent shape mismatch".into()));
        }
        let g = grad_out.data();
        for row in g.chunks_exact(out) {
            for (acc, &v) in self.bias.grad.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut gx = vec![T::ZERO; b * f];
        // SAFETY: dW[out x f] += g^T[out x b] * x[b x f]; dx[b x f] = g[b x out] * W[out x f].
        unsafe {
            T::gemm(
                out,
                b,
                f,
                T::ONE,
                g.as_ptr(),
                1,
                out as isize,
                x.data().as_ptr(),
                f as isize,
                1,
                T::ONE,
                self.weight.grad.as_mut_ptr(),
                f as isize,
                1,
            );
            T::gemm(
                b,
                out,
                f,
                T::ONE,
                g.as_ptr(),
                out as isize,
                1,
                self.weight.value.as_ptr(),
                f as isize,
                1,
                T::ZERO,
                gx.as_mut_ptr(),
                f as isize,
                1,
            );
        }
        Tensor::new(vec![b, f], gx)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::Dense { in_features: self.in_features, out_features: self.out_features }
    }
}

/// `[b, c, l] -> [b, c * l]`.
#[derive(Default)]
pub struct Flatten<T> {
    input_shape: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Flatten<T> {
    pub fn new() -> Self {
        Flatten { input_shape: None, _marker: std::marker::PhantomData }
    }
}

impl<T: Scalar> Layer<T> for Flatten<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, l) = x.dims3()?;
        x.clone().reshape(vec![b, c * l])
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.take().ok_or_else(missing_cache)?;
        grad_out.clone().reshape(shape)
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::Flatten
    }
}
