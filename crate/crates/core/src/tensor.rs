//! Dense row-major tensors of rank 2 (`[batch, features]`) or rank 3
//! (`[batch, channels, length]`), generic over `f32` and `f64`.

use std::fmt::Debug;
use std::iter::Sum;

use crate::error::{Error, Result};

/// Floating point element type with a strided GEMM kernel.
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + Sum
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
{
    const ZERO: Self;
    const ONE: Self;

    fn of(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn is_finite(self) -> bool;

    /// `C = alpha * A * B + beta * C` with arbitrary element strides.
    ///
    /// # Safety
    /// The pointers and strides must describe valid, in-bounds matrices of
    /// shapes `m x k`, `k x n` and `m x n`; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            unsafe fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.len() != 2 && shape.len() != 3 {
            return Err(Error::Shape(format!("rank must be 2 or 3, got shape {shape:?}")));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![T::ZERO; numel] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    /// Rank-3 tensor `[rows, 1, len]` built from equal-length series.
    pub fn from_series(rows: &[Vec<T>]) -> Result<Self> {
        let len = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::Shape("series rows differ in length".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::new(vec![rows.len(), 1, len], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// `(batch, channels, length)`; errors unless rank 3.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[b, c, l] => Ok((b, c, l)),
            s => Err(Error::Shape(format!("expected [batch, channels, length], got {s:?}"))),
        }
    }

    /// `(batch, features)`; errors unless rank 2.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[b, f] => Ok((b, f)),
            s => Err(Error::Shape(format!("expected [batch, features], got {s:?}"))),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows `[start, end)` along the batch axis.
    pub fn slice_batch(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.batch() {
            return Err(Error::Shape(format!(
                "batch slice {start}..{end} out of range for batch {}",
                self.batch()
            )));
        }
        let row: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Ok(Tensor { shape, data: self.data[start * row..end * row].to_vec() })
    }

    /// Gather rows along the batch axis.
    pub fn select_batch(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Shape("empty row selection".into()));
        }
        let row: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(rows.len() * row);
        for &r in rows {
            if r >= self.batch() {
                return Err(Error::Shape(format!("row {r} out of range for batch {}", self.batch())));
            }
            data.extend_from_slice(&self.data[r * row..(r + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Ok(Tensor { shape, data })
    }

    pub fn convert<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.to_f64())).collect(),
        }
    }
}

/// Concatenate rank-3 tensors along the channel axis, in list order.
pub fn concat_channels<T: Scalar>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs.first().ok_or_else(|| Error::Config("concat of zero tensors".into()))?;
    let (b, _, l) = first.dims3()?;
    let mut total = 0;
    for x in xs {
        let (xb, xc, xl) = x.dims3()?;
        if xb != b || xl != l {
            return Err(Error::Config(format!(
                "concat mismatch: expected batch {b} length {l}, got {:?}",
                x.shape()
            )));
        }
        total += xc;
    }
    let mut out = Vec::with_capacity(b * total * l);
    for n in 0..b {
        for x in xs {
            let c = x.shape()[1];
            out.extend_from_slice(&x.data()[n * c * l..(n + 1) * c * l]);
        }
    }
    Tensor::new(vec![b, total, l], out)
}

/// Inverse of [`concat_channels`]: split the channel axis into consecutive
/// groups of the given widths. Also the backward pass of concatenation.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (b, c, l) = x.dims3()?;
    if widths.iter().sum::<usize>() != c || widths.contains(&0) {
        return Err(Error::Config(format!("cannot split {c} channels into {widths:?}")));
    }
    let mut parts: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(b * w * l)).collect();
    for n in 0..b {
        let mut offset = n * c * l;
        for (part, w) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&x.data()[offset..offset + w * l]);
            offset += w * l;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(data, &w)| Tensor::new(vec![b, w, l], data))
        .collect()
}

/// Copy channels `[start, end)` of a rank-3 tensor.
pub fn channel_range<T: Scalar>(x: &Tensor<T>, start: usize, end: usize) -> Result<Tensor<T>> {
    let (b, c, l) = x.dims3()?;
    if start >= end || end > c {
        return Err(Error::Shape(format!("channel range {start}..{end} out of 0..{c}")));
    }
    let w = end - start;
    let mut data = Vec::with_capacity(b * w * l);
    for n in 0..b {
        let base = n * c * l;
        data.extend_from_slice(&x.data()[base + start * l..base + end * l]);
    }
    Tensor::new(vec![b, w, l], data)
}

/// Add `src` into channels starting at `start` of `dst`.
pub fn add_into_channels<T: Scalar>(dst: &mut Tensor<T>, start: usize, src: &Tensor<T>) -> Result<()> {
    let (b, c, l) = dst.dims3()?;
    let (sb, sc, sl) = src.dims3()?;
    if sb != b || sl != l || start + sc > c {
        return Err(Error::Shape(format!(
            "cannot add {:?} into channels {start}.. of {:?}",
            src.shape(),
            dst.shape()
        )));
    }
    for n in 0..b {
        let d = &mut dst.data[n * c * l + start * l..n * c * l + (start + sc) * l];
        let s = &src.data[n * sc * l..(n + 1) * sc * l];
        for (dv, &sv) in d.iter_mut().zip(s) {
            *dv += sv;
        }
    }
    Ok(())
}

/// Write `src` into channels starting at `start` of `dst`.
pub fn write_channels<T: Scalar>(dst: &mut Tensor<T>, start: usize, src: &Tensor<T>) -> Result<()> {
    let (b, c, l) = dst.dims3()?;
    let (sb, sc, sl) = src.dims3()?;
    if sb != b || sl != l || start + sc > c {
        return Err(Error::Shape(format!(
            "cannot write {:?} into channels {start}.. of {:?}",
            src.shape(),
            dst.shape()
        )));
    }
    for n in 0..b {
        dst.data[n * c * l + start * l..n * c * l + (start + sc) * l]
            .copy_from_slice(&src.data[n * sc * l..(n + 1) * sc * l]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(b: usize, c: usize, l: usize, start: f64) -> Tensor<f64> {
        let data = (0..b * c * l).map(|i| start + i as f64).collect();
        Tensor::new(vec![b, c, l], data).unwrap()
    }

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 3, 1, 1], vec![0.0; 6]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn concat_single_is_identity() {
        let x = t3(2, 3, 4, 0.0);
        assert_eq!(concat_channels(&[&x]).unwrap(), x);
    }

    #[test]
    fn concat_two_single_channel_inputs() {
        let a = Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::new(vec![1, 1, 3], vec![4.0, 5.0, 6.0]).unwrap();
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[1, 2, 3]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn concat_rejects_length_mismatch() {
        let a = t3(1, 1, 3, 0.0);
        let b = t3(1, 1, 4, 0.0);
        assert!(matches!(concat_channels(&[&a, &b]), Err(Error::Config(_))));
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = t3(3, 2, 5, 0.0);
        let b = t3(3, 1, 5, 100.0);
        let c = t3(3, 4, 5, 200.0);
        let cat = concat_channels(&[&a, &b, &c]).unwrap();
        let parts = split_channels(&cat, &[2, 1, 4]).unwrap();
        assert_eq!(parts, vec![a, b, c]);
    }

    #[test]
    fn channel_helpers_agree_with_split() {
        let x = t3(2, 5, 3, 0.0);
        let mid = channel_range(&x, 1, 4).unwrap();
        let parts = split_channels(&x, &[1, 3, 1]).unwrap();
        assert_eq!(mid, parts[1]);
        let mut acc = Tensor::zeros(&[2, 5, 3]);
        write_channels(&mut acc, 1, &mid).unwrap();
        add_into_channels(&mut acc, 1, &mid).unwrap();
        assert_eq!(channel_range(&acc, 1, 4).unwrap(), mid.map(|v| 2.0 * v));
        assert!(channel_range(&acc, 0, 1).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
