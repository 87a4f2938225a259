use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::kernels;
use super::{missing_cache, InitRng, Layer, LayerSummary, Param};

/// Gradients produced by [`conv1d_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn check_shapes<T: Scalar>(
    x: &Tensor<T>,
    weights: &[T],
    bias: &[T],
    kernel: usize,
) -> Result<(usize, usize, usize, usize)> {
    let (b, cin, l) = x.dims3()?;
    let cout = bias.len();
    if kernel == 0 || cout == 0 {
        return Err(Error::Config("conv1d needs kernel >= 1 and at least one filter".into()));
    }
    if weights.len() != cout * cin * kernel {
        return Err(Error::Config(format!(
            "conv1d weights hold {} values, expected {cout}x{cin}x{kernel} for input {:?}",
            weights.len(),
            x.shape()
        )));
    }
    Ok((b, cin, l, cout))
}

/// Per-tap GEMM only pays off once both channel counts are this large.
const GEMM_MIN_CHANNELS: usize = 16;

fn use_direct(cin: usize, cout: usize) -> bool {
    cin.min(cout) < GEMM_MIN_CHANNELS
}

/// `[cout, cin, k]` to `[(cin * k + j) * cout + o]`.
fn tap_major<T: Scalar>(weights: &[T], cout: usize, cin: usize, kernel: usize) -> Vec<T> {
    let mut wt = vec![T::ZERO; weights.len()];
    for o in 0..cout {
        for c in 0..cin {
            for j in 0..kernel {
                wt[(c * kernel + j) * cout + o] = weights[(o * cin + c) * kernel + j];
            }
        }
    }
    wt
}

/// Zero-padded input laid out channel-major across the batch:
/// `[cin, batch * (len + kernel - 1)]`, each sample occupying one segment.
fn pad_input<T: Scalar>(x: &Tensor<T>, kernel: usize) -> Vec<T> {
    let (b, cin, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let seg = l + kernel - 1;
    let total = b * seg;
    let left = kernel / 2;
    let mut xp = vec![T::ZERO; cin * total];
    for n in 0..b {
        for c in 0..cin {
            let src = &x.data()[(n * cin + c) * l..(n * cin + c + 1) * l];
            let dst = c * total + n * seg + left;
            xp[dst..dst + l].copy_from_slice(src);
        }
    }
    xp
}

/// Cross-correlation with "same" zero padding and stride 1:
/// `out[o, t] = bias[o] + sum_{c, j} w[o, c, j] * x[c, t + j - kernel/2]`.
///
/// `weights` is `[out_channels, in_channels, kernel]` row-major and the
/// number of filters is `bias.len()`.
pub fn conv1d<T: Scalar>(x: &Tensor<T>, weights: &[T], bias: &[T], kernel: usize) -> Result<Tensor<T>> {
    let (b, cin, l, cout) = check_shapes(x, weights, bias, kernel)?;
    let seg = l + kernel - 1;
    let total = b * seg;
    let ncols = total - (kernel - 1);
    let xp = pad_input(x, kernel);
    let mut y = vec![T::ZERO; cout * ncols];
    if use_direct(cin, cout) {
        let wt = tap_major(weights, cout, cin, kernel);
        kernels::correlate(&xp, cin, total, &wt, kernel, cout, &mut y, ncols, ncols, false);
    } else {
        for j in 0..kernel {
            // SAFETY: A is the j-th tap of the weights ([cout x cin], strides
            // cin*k and k), B is xp shifted by j ([cin x ncols], stride total),
            // and both stay in bounds because ncols + j <= total.
            unsafe {
                T::gemm(
                    cout,
                    cin,
                    ncols,
                    T::ONE,
                    weights.as_ptr().add(j),
                    (cin * kernel) as isize,
                    kernel as isize,
                    xp.as_ptr().add(j),
                    total as isize,
                    1,
                    T::ONE,
                    y.as_mut_ptr(),
                    ncols as isize,
                    1,
                );
            }
        }
    }
    let mut out = vec![T::ZERO; b * cout * l];
    for n in 0..b {
        for o in 0..cout {
            let src = &y[o * ncols + n * seg..o * ncols + n * seg + l];
            let dst = &mut out[(n * cout + o) * l..(n * cout + o + 1) * l];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s + bias[o];
            }
        }
    }
    Tensor::new(vec![b, cout, l], out)
}

/// Exact gradients of [`conv1d`] given the upstream cotangent.
pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    weights: &[T],
    bias: &[T],
    kernel: usize,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (b, cin, l, cout) = check_shapes(x, weights, bias, kernel)?;
    if grad_out.shape() != [b, cout, l] {
        return Err(Error::Config(format!(
            "conv1d cotangent shape {:?} does not match output [{b}, {cout}, {l}]",
            grad_out.shape()
        )));
    }
    let seg = l + kernel - 1;
    let total = b * seg;
    let ncols = total - (kernel - 1);
    let left = kernel / 2;
    let xp = pad_input(x, kernel);

    let mut gy = vec![T::ZERO; cout * ncols];
    let mut gb = vec![T::ZERO; cout];
    for n in 0..b {
        for o in 0..cout {
            let src = &grad_out.data()[(n * cout + o) * l..(n * cout + o + 1) * l];
            gy[o * ncols + n * seg..o * ncols + n * seg + l].copy_from_slice(src);
            gb[o] += src.iter().copied().sum();
        }
    }

    let mut gw = vec![T::ZERO; cout * cin * kernel];
    let mut gxp = vec![T::ZERO; cin * total];
    if use_direct(cin, cout) {
        kernels::weight_grad(&gy, ncols, cout, &xp, total, cin, kernel, ncols, &mut gw);
    } else {
        for j in 0..kernel {
            // SAFETY: same index ranges as the forward pass; gw is a
            // distinct allocation. dW_j[o, c] = sum_s gy[o, s] * xp[c, s + j]
            unsafe {
                T::gemm(
                    cout,
                    ncols,
                    cin,
                    T::ONE,
                    gy.as_ptr(),
                    ncols as isize,
                    1,
                    xp.as_ptr().add(j),
                    1,
                    total as isize,
                    T::ONE,
                    gw.as_mut_ptr().add(j),
                    (cin * kernel) as isize,
                    kernel as isize,
                );
            }
        }
    }
    if use_direct(cin, cout) {
        // gxp[c, p] = sum_{o, j} w[o, c, k-1-j] * gy[o, p + j - (k-1)]
        let pad = kernel - 1;
        let gstride = ncols + 2 * pad;
        let mut gyp = vec![T::ZERO; cout * gstride];
        for o in 0..cout {
            gyp[o * gstride + pad..o * gstride + pad + ncols].copy_from_slice(&gy[o * ncols..(o + 1) * ncols]);
        }
        let mut wt = vec![T::ZERO; cout * kernel * cin];
        for o in 0..cout {
            for c in 0..cin {
                for j in 0..kernel {
                    wt[(o * kernel + j) * cin + c] = weights[(o * cin + c) * kernel + kernel - 1 - j];
                }
            }
        }
        kernels::correlate(&gyp, cout, gstride, &wt, kernel, cin, &mut gxp, total, total, false);
    } else {
        for j in 0..kernel {
            // SAFETY: dxp[c, s + j] += sum_o w[o, c, j] * gy[o, s], writes
            // stay inside gxp because ncols + j <= total.
            unsafe {
                T::gemm(
                    cin,
                    cout,
                    ncols,
                    T::ONE,
                    weights.as_ptr().add(j),
                    kernel as isize,
                    (cin * kernel) as isize,
                    gy.as_ptr(),
                    ncols as isize,
                    1,
                    T::ONE,
                    gxp.as_mut_ptr().add(j),
                    total as isize,
                    1,
                );
            }
        }
    }

    let mut gx = vec![T::ZERO; b * cin * l];
    for n in 0..b {
        for c in 0..cin {
            let src = c * total + n * seg + left;
            gx[(n * cin + c) * l..(n * cin + c + 1) * l].copy_from_slice(&gxp[src..src + l]);
        }
    }
    Ok(ConvGrads { input: Tensor::new(vec![b, cin, l], gx)?, weights: gw, bias: gb })
}

/// Same-padded 1D convolution layer.
pub struct Conv1d<T> {
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    weight: Param<T>,
    bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut InitRng) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 {
            return Err(Error::Config(format!(
                "conv1d({in_channels} -> {out_channels}, k={kernel}) has a zero dimension"
            )));
        }
        let fan_in = in_channels * kernel;
        Ok(Conv1d {
            in_channels,
            out_channels,
            kernel,
            weight: Param::he_uniform(out_channels * fan_in, fan_in, rng),
            bias: Param::zeros(out_channels),
            input: None,
        })
    }

    pub fn from_weights(in_channels: usize, kernel: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let out_channels = bias.len();
        if weights.len() != out_channels * in_channels * kernel || kernel == 0 || out_channels == 0 {
            return Err(Error::Config("conv1d weight/bias sizes are inconsistent".into()));
        }
        Ok(Conv1d {
            in_channels,
            out_channels,
            kernel,
            weight: Param::new(weights),
            bias: Param::new(bias),
            input: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, _) = x.dims3()?;
        if c != self.in_channels {
            return Err(Error::Config(format!(
                "conv1d expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Layer<T> for Conv1d<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        conv1d(x, &self.weight.value, &self.bias.value, self.kernel)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or_else(missing_cache)?;
        let g = conv1d_backward(&x, &self.weight.value, &self.bias.value, self.kernel, grad_out)?;
        for (acc, v) in self.weight.grad.iter_mut().zip(&g.weights) {
            *acc += *v;
        }
        for (acc, v) in self.bias.grad.iter_mut().zip(&g.bias) {
            *acc += *v;
        }
        Ok(g.input)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn summary(&self) -> LayerSummary {
        LayerSummary::Conv { in_channels: self.in_channels, filters: self.out_channels, kernel: self.kernel }
    }

    fn conv_count(&self) -> usize {
        1
    }
}
