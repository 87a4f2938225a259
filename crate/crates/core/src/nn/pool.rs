use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::{missing_cache, Layer, LayerSummary};

/// Mean over windows `[t*stride, t*stride + window)`; a trailing partial
/// window is dropped.
pub fn avg_pool1d<T: Scalar>(x: &Tensor<T>, window: usize, stride: usize) -> Result<Tensor<T>> {
    let (b, c, l) = x.dims3()?;
    if window == 0 || stride == 0 {
        return Err(Error::Config("pooling window and stride must be >= 1".into()));
    }
    if window > l {
        return Err(Error::EmptyPool { window, length: l });
    }
    let out_len = (l - window) / stride + 1;
    let scale = T::of(1.0 / window as f64);
    let mut out = Vec::with_capacity(b * c * out_len);
    for row in x.data().chunks_exact(l) {
        for t in 0..out_len {
            let s: T = row[t * stride..t * stride + window].iter().copied().sum();
            out.push(s * scale);
        }
    }
    Tensor::new(vec![b, c, out_len], out)
}

/// Per-channel mean over the length axis: `[b, c, l] -> [b, c]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, l) = x.dims3()?;
    let scale = T::of(1.0 / l as f64);
    let out = x.data().chunks_exact(l).map(|row| row.iter().copied().sum::<T>() * scale).collect();
    Tensor::new(vec![b, c], out)
}

pub struct AvgPool1d<T> {
    window: usize,
    stride: usize,
    input_shape: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> AvgPool1d<T> {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::Config("pooling window and stride must be >= 1".into()));
        }
        Ok(AvgPool1d { window, stride, input_shape: None, _marker: std::marker::PhantomData })
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        if self.window > len {
            return Err(Error::EmptyPool { window: self.window, length: len });
        }
        Ok((len - self.window) / self.stride + 1)
    }
}

impl<T: Scalar> Layer<T> for AvgPool1d<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = avg_pool1d(x, self.window, self.stride)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        avg_pool1d(x, self.window, self.stride)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.take().ok_or_else(missing_cache)?;
        let (b, c, l) = (shape[0], shape[1], shape[2]);
        let out_len = self.output_len(l)?;
        if grad_out.shape() != [b, c, out_len] {
            return Err(Error::Shape("avg pool cotangent shape mismatch".into()));
        }
        let scale = T::of(1.0 / self.window as f64);
        let mut gx = vec![T::ZERO; b * c * l];
        for (row, g) in gx.chunks_exact_mut(l).zip(grad_out.data().chunks_exact(out_len)) {
            for (t, &gv) in g.iter().enumerate() {
                for v in &mut row[t * self.stride..t * self.stride + self.window] {
                    *v += gv * scale;
                }
            }
        }
        Tensor::new(shape, gx)
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::AvgPool { window: self.window, stride: self.stride }
    }
}

#[derive(Default)]
pub struct GlobalAvgPool<T> {
    input_shape: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> GlobalAvgPool<T> {
    pub fn new() -> Self {
        GlobalAvgPool { input_shape: None, _marker: std::marker::PhantomData }
    }
}

impl<T: Scalar> Layer<T> for GlobalAvgPool<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = global_avg_pool(x)?;
        self.input_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        global_avg_pool(x)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.input_shape.take().ok_or_else(missing_cache)?;
        let l = shape[2];
        if grad_out.shape() != [shape[0], shape[1]] {
            return Err(Error::Shape("global pool cotangent shape mismatch".into()));
        }
        let scale = T::of(1.0 / l as f64);
        let gx = grad_out.data().iter().flat_map(|&g| std::iter::repeat_n(g * scale, l)).collect();
        Tensor::new(shape, gx)
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::GlobalAvgPool
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{check_layer, random_tensor};

    fn series(v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(avg_pool1d(&series(&[1.0, 3.0, 5.0, 7.0]), 2, 2).unwrap().data(), &[2.0, 6.0]);
        assert_eq!(avg_pool1d(&series(&[1.0, 2.0, 3.0]), 2, 1).unwrap().data(), &[1.5, 2.5]);
        let x = random_tensor(&[2, 3, 7], 1);
        assert_eq!(avg_pool1d(&x, 1, 1).unwrap(), x);
    }

    #[test]
    fn partial_window_dropped() {
        let y = avg_pool1d(&Tensor::<f64>::zeros(&[1, 2, 365]), 2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 182]);
    }

    #[test]
    fn oversized_window_is_an_error() {
        assert!(matches!(
            avg_pool1d(&series(&[1.0, 2.0]), 3, 1),
            Err(Error::EmptyPool { window: 3, length: 2 })
        ));
    }

    #[test]
    fn global_pool_examples() {
        assert_eq!(global_avg_pool(&series(&[1.0, 2.0, 3.0, 4.0])).unwrap().data(), &[2.5]);
        assert_eq!(global_avg_pool(&Tensor::full(&[2, 3, 5], 4.5)).unwrap().data(), &[4.5; 6]);
        let alt = series(&[0.7, -0.7, 0.7, -0.7, 0.7, -0.7]);
        assert_eq!(global_avg_pool(&alt).unwrap().data(), &[0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_layer(&mut AvgPool1d::new(2, 2).unwrap(), &random_tensor(&[2, 2, 7], 3), 3);
        check_layer(&mut AvgPool1d::new(3, 1).unwrap(), &random_tensor(&[1, 2, 6], 4), 4);
        check_layer(&mut GlobalAvgPool::new(), &random_tensor(&[2, 3, 5], 5), 5);
    }
}
