//! Register-blocked direct correlation kernels.
//!
//! GEMM-based convolution re-packs the (large) input once per kernel tap,
//! which dominates when the number of filters is small. These kernels keep a
//! `CO x LANES` accumulator tile in registers instead. Summation order is
//! fixed, so results are deterministic.

use crate::tensor::Scalar;

const LANES: usize = 16;

/// `out[o * out_stride + s] (+)= sum_{r, j} wt[(r * k + j) * co + o] * input[r * in_stride + s + j]`
/// for `o < co`, `s < n_out`. Overwrites `out` unless `accumulate`.
#[allow(clippy::too_many_arguments)]
pub fn correlate<T: Scalar>(
    input: &[T],
    in_rows: usize,
    in_stride: usize,
    wt: &[T],
    k: usize,
    co: usize,
    out: &mut [T],
    out_stride: usize,
    n_out: usize,
    accumulate: bool,
) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports the enabled features.
        unsafe {
            return correlate_avx2(input, in_rows, in_stride, wt, k, co, out, out_stride, n_out, accumulate);
        }
    }
    correlate_impl(input, in_rows, in_stride, wt, k, co, out, out_stride, n_out, accumulate)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn correlate_avx2<T: Scalar>(
    input: &[T],
    in_rows: usize,
    in_stride: usize,
    wt: &[T],
    k: usize,
    co: usize,
    out: &mut [T],
    out_stride: usize,
    n_out: usize,
    accumulate: bool,
) {
    correlate_impl(input, in_rows, in_stride, wt, k, co, out, out_stride, n_out, accumulate)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn correlate_impl<T: Scalar>(
    input: &[T],
    in_rows: usize,
    in_stride: usize,
    wt: &[T],
    k: usize,
    co: usize,
    out: &mut [T],
    out_stride: usize,
    n_out: usize,
    accumulate: bool,
) {
    let a = TileArgs { input, in_rows, in_stride, wt, k, co, out_stride, accumulate };
    let mut s0 = 0;
    while s0 + LANES <= n_out {
        let mut o0 = 0;
        while o0 < co {
            o0 += match co - o0 {
                r if r >= 4 => tile::<T, 4>(&a, out, o0, s0),
                r if r >= 2 => tile::<T, 2>(&a, out, o0, s0),
                _ => tile::<T, 1>(&a, out, o0, s0),
            };
        }
        s0 += LANES;
    }
    for s in s0..n_out {
        for o in 0..co {
            let mut v = T::ZERO;
            for r in 0..in_rows {
                for j in 0..k {
                    v += wt[(r * k + j) * co + o] * input[r * in_stride + s + j];
                }
            }
            let d = &mut out[o * out_stride + s];
            if accumulate {
                *d += v;
            } else {
                *d = v;
            }
        }
    }
}

struct TileArgs<'a, T> {
    input: &'a [T],
    in_rows: usize,
    in_stride: usize,
    wt: &'a [T],
    k: usize,
    co: usize,
    out_stride: usize,
    accumulate: bool,
}

/// One `CO x LANES` output tile at rows `o0..`, positions `s0..`. Returns `CO`.
#[inline(always)]
fn tile<T: Scalar, const CO: usize>(a: &TileArgs<'_, T>, out: &mut [T], o0: usize, s0: usize) -> usize {
    let mut acc = [[T::ZERO; LANES]; CO];
    for r in 0..a.in_rows {
        let row = &a.input[r * a.in_stride + s0..r * a.in_stride + s0 + LANES + a.k - 1];
        let wrow = &a.wt[r * a.k * a.co..(r + 1) * a.k * a.co];
        for j in 0..a.k {
            let xs: &[T; LANES] = row[j..j + LANES].try_into().unwrap();
            let w: &[T; CO] = wrow[j * a.co + o0..j * a.co + o0 + CO].try_into().unwrap();
            for o in 0..CO {
                let wv = w[o];
                for i in 0..LANES {
                    acc[o][i] += wv * xs[i];
                }
            }
        }
    }
    for (o, lanes) in acc.iter().enumerate() {
        let dst = &mut out[(o0 + o) * a.out_stride + s0..(o0 + o) * a.out_stride + s0 + LANES];
        if a.accumulate {
            for (d, &v) in dst.iter_mut().zip(lanes) {
                *d += v;
            }
        } else {
            dst.copy_from_slice(lanes);
        }
    }
    CO
}

/// `gw[(o * cin + c) * k + j] += sum_s gy[o * gy_stride + s] * xp[c * xp_stride + s + j]`
/// for `s < n`.
#[allow(clippy::too_many_arguments)]
pub fn weight_grad<T: Scalar>(
    gy: &[T],
    gy_stride: usize,
    cout: usize,
    xp: &[T],
    xp_stride: usize,
    cin: usize,
    k: usize,
    n: usize,
    gw: &mut [T],
) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports the enabled features.
        unsafe {
            return weight_grad_avx2(gy, gy_stride, cout, xp, xp_stride, cin, k, n, gw);
        }
    }
    weight_grad_impl(gy, gy_stride, cout, xp, xp_stride, cin, k, n, gw)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn weight_grad_avx2<T: Scalar>(
    gy: &[T],
    gy_stride: usize,
    cout: usize,
    xp: &[T],
    xp_stride: usize,
    cin: usize,
    k: usize,
    n: usize,
    gw: &mut [T],
) {
    weight_grad_impl(gy, gy_stride, cout, xp, xp_stride, cin, k, n, gw)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn weight_grad_impl<T: Scalar>(
    gy: &[T],
    gy_stride: usize,
    cout: usize,
    xp: &[T],
    xp_stride: usize,
    cin: usize,
    k: usize,
    n: usize,
    gw: &mut [T],
) {
    let mut s0 = 0;
    while s0 < n {
        let len = CHUNK.min(n - s0);
        let mut o0 = 0;
        while o0 < cout {
            let rows = if cout - o0 >= 4 { 4 } else if cout - o0 >= 2 { 2 } else { 1 };
            for c in 0..cin {
                let x = &xp[c * xp_stride + s0..c * xp_stride + s0 + len + k - 1];
                let mut j = 0;
                while j < k {
                    let step = if k - j >= 2 { 2 } else { 1 };
                    let g = |o: usize| &gy[(o0 + o) * gy_stride + s0..(o0 + o) * gy_stride + s0 + len];
                    let mut put = |o: usize, jj: usize, v: T| gw[((o0 + o) * cin + c) * k + j + jj] += v;
                    match (rows, step) {
                        (4, 2) => wg_tile::<T, 4, 2>(g, x, j, len, &mut put),
                        (4, _) => wg_tile::<T, 4, 1>(g, x, j, len, &mut put),
                        (2, 2) => wg_tile::<T, 2, 2>(g, x, j, len, &mut put),
                        (2, _) => wg_tile::<T, 2, 1>(g, x, j, len, &mut put),
                        (_, 2) => wg_tile::<T, 1, 2>(g, x, j, len, &mut put),
                        _ => wg_tile::<T, 1, 1>(g, x, j, len, &mut put),
                    }
                    j += step;
                }
            }
            o0 += rows;
        }
        s0 += len;
    }
}

const CHUNK: usize = 512;
const WG_LANES: usize = 8;

/// Dot products of `CO` gradient rows with `J` consecutive shifts of `x`
/// starting at lag `j0`, over `len` positions.
#[inline(always)]
fn wg_tile<'g, T: Scalar, const CO: usize, const J: usize>(
    g: impl Fn(usize) -> &'g [T],
    x: &[T],
    j0: usize,
    len: usize,
    put: &mut impl FnMut(usize, usize, T),
) {
    let rows: [&[T]; CO] = std::array::from_fn(g);
    let mut acc = [[[T::ZERO; WG_LANES]; J]; CO];
    let full = len / WG_LANES * WG_LANES;
    let mut s = 0;
    while s < full {
        let gv: [&[T; WG_LANES]; CO] = std::array::from_fn(|o| rows[o][s..s + WG_LANES].try_into().unwrap());
        for jj in 0..J {
            let xs: &[T; WG_LANES] = x[s + j0 + jj..s + j0 + jj + WG_LANES].try_into().unwrap();
            for o in 0..CO {
                for i in 0..WG_LANES {
                    acc[o][jj][i] += gv[o][i] * xs[i];
                }
            }
        }
        s += WG_LANES;
    }
    for o in 0..CO {
        for jj in 0..J {
            let mut v = acc[o][jj].iter().copied().sum::<T>();
            for t in full..len {
                v += rows[o][t] * x[t + j0 + jj];
            }
            put(o, jj, v);
        }
    }
}
