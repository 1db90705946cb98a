//! Dense kernels used by the network. All matrices are row-major slices.

use crate::scalar::Real;

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn matmul_acc<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[k×n] += aᵀ · b` for `a[m×k]`, `b[m×n]`.
pub fn matmul_tn_acc<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == T::zero() {
                continue;
            }
            for (o, &bv) in out[p * n..(p + 1) * n].iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m×k] += a · bᵀ` for `a[m×n]`, `b[k×n]`.
pub fn matmul_nt_acc<T: Real>(a: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out[i * k + p] += s;
        }
    }
}

/// Adds a bias row to every row of `x[rows×n]`.
pub fn add_bias<T: Real>(x: &mut [T], bias: &[T]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Column sums of `x[rows×n]` accumulated into `out[n]`.
pub fn col_sum_acc<T: Real>(x: &[T], out: &mut [T]) {
    for row in x.chunks_exact(out.len()) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let u = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let th = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::lit(3.0) * a * x * x)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm. Returns the normalized rows (before gain/bias) and the
/// reciprocal standard deviations, writing `gain ⊙ x̂ + bias` into `out`.
pub fn layer_norm<T: Real>(x: &[T], gain: &[T], bias: &[T], out: &mut [T], xhat: &mut [T], rstd: &mut [T]) {
    let d = gain.len();
    let inv_d = T::one() / T::from_usize_lossy(d);
    for (r, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + T::lit(LN_EPS)).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let xh = (row[j] - mean) * rs;
            xhat[r * d + j] = xh;
            out[r * d + j] = gain[j] * xh + bias[j];
        }
    }
}

/// Backward of [`layer_norm`]: accumulates into `dx`, `dgain`, `dbias`.
pub fn layer_norm_backward<T: Real>(
    dout: &[T],
    xhat: &[T],
    rstd: &[T],
    gain: &[T],
    dx: &mut [T],
    dgain: &mut [T],
    dbias: &mut [T],
) {
    let d = gain.len();
    let inv_d = T::one() / T::from_usize_lossy(d);
    let mut dxhat = vec![T::zero(); d];
    for (r, drow) in dout.chunks_exact(d).enumerate() {
        let xh = &xhat[r * d..(r + 1) * d];
        let mut sum_dxh = T::zero();
        let mut sum_dxh_xh = T::zero();
        for j in 0..d {
            dgain[j] += drow[j] * xh[j];
            dbias[j] += drow[j];
            dxhat[j] = drow[j] * gain[j];
            sum_dxh += dxhat[j];
            sum_dxh_xh += dxhat[j] * xh[j];
        }
        for j in 0..d {
            dx[r * d + j] += rstd[r] * (dxhat[j] - inv_d * sum_dxh - inv_d * xh[j] * sum_dxh_xh);
        }
    }
}

/// In-place numerically stable softmax over one row.
pub fn softmax_row<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Nearest-neighbor 2× upsample of `[c, h, w]` to `[c, 2h, 2w]`.
pub fn upsample2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * h2 * w2];
    for ch in 0..c {
        for y in 0..h2 {
            let src = &x[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
            let dst = &mut out[(ch * h2 + y) * w2..(ch * h2 + y + 1) * w2];
            for (xo, v) in dst.iter_mut().enumerate() {
                *v = src[xo / 2];
            }
        }
    }
    out
}

/// Backward of [`upsample2`]: each source cell receives the sum of its 2×2 block.
pub fn upsample2_backward<T: Real>(dout: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..h2 {
            for xo in 0..w2 {
                dx[(ch * h + y / 2) * w + xo / 2] += dout[(ch * h2 + y) * w2 + xo];
            }
        }
    }
    dx
}

/// Output range `[lo, hi)` along one axis for kernel offset `k ∈ {0,1,2}`
/// under zero "same" padding.
#[inline]
fn valid(k: usize, n: usize) -> (usize, usize) {
    match k {
        0 => (1, n),
        1 => (0, n),
        _ => (0, n - 1),
    }
}

/// 3×3 same-padded convolution: `[c_in, h, w]` → `[c_out, h, w]`.
pub fn conv3x3<T: Real>(x: &[T], weight: &[T], bias: &[T], c_in: usize, c_out: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c_out * hw];
    for co in 0..c_out {
        let plane = &mut out[co * hw..(co + 1) * hw];
        plane.fill(bias[co]);
        for ci in 0..c_in {
            let src = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..3 {
                let (y0, y1) = valid(ky, h);
                for kx in 0..3 {
                    let wv = weight[((co * c_in + ci) * 3 + ky) * 3 + kx];
                    let (x0, x1) = valid(kx, w);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward of [`conv3x3`]. Accumulates kernel and bias gradients and returns
/// the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Real>(
    dout: &[T],
    x: &[T],
    weight: &[T],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let hw = h * w;
    let mut dx = vec![T::zero(); c_in * hw];
    for co in 0..c_out {
        let g = &dout[co * hw..(co + 1) * hw];
        dbias[co] += g.iter().copied().sum::<T>();
        for ci in 0..c_in {
            let src = &x[ci * hw..(ci + 1) * hw];
            let dsrc = &mut dx[ci * hw..(ci + 1) * hw];
            for ky in 0..3 {
                let (y0, y1) = valid(ky, h);
                for kx in 0..3 {
                    let wi = ((co * c_in + ci) * 3 + ky) * 3 + kx;
                    let wv = weight[wi];
                    let (x0, x1) = valid(kx, w);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let gr = &g[y * w + x0..y * w + x1];
                        let off = sy * w + x0 + kx - 1;
                        let s = &src[off..off + (x1 - x0)];
                        for (&gv, &sv) in gr.iter().zip(s) {
                            acc += gv * sv;
                        }
                        let ds = &mut dsrc[off..off + (x1 - x0)];
                        for (d, &gv) in ds.iter_mut().zip(gr) {
                            *d += wv * gv;
                        }
                    }
                    dweight[wi] += acc;
                }
            }
        }
    }
    dx
}
