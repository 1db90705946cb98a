//! Forward pass with a recorded tape, and the matching reverse pass.

use std::ops::Range;

use super::ops::{
    add_bias, col_sum_acc, conv3x3, conv3x3_backward, gelu, gelu_grad, layer_norm, layer_norm_backward, matmul_acc,
    matmul_nt_acc, matmul_tn_acc, sigmoid, softmax_row, upsample2, upsample2_backward,
};
use super::Model;
use crate::image::ImageFrame;
use crate::ingest::AmplitudeWindow;
use crate::scalar::Real;

struct BlockTape<T> {
    ln1_xhat: Vec<T>,
    ln1_rstd: Vec<T>,
    a: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Attention weights, `[head][query][key]`.
    probs: Vec<T>,
    ctx: Vec<T>,
    ln2_xhat: Vec<T>,
    ln2_rstd: Vec<T>,
    b: Vec<T>,
    f_pre: Vec<T>,
    f_act: Vec<T>,
}

struct StageTape<T> {
    side: usize,
    up: Vec<T>,
    pre: Vec<T>,
}

/// Intermediate activations of one forward pass.
pub struct Tape<T> {
    tokens: Vec<T>,
    blocks: Vec<BlockTape<T>>,
    lnf_xhat: Vec<T>,
    lnf_rstd: Vec<T>,
    latent: Vec<T>,
    stages: Vec<StageTape<T>>,
    /// Output image, channel-major `[3][H][W]`.
    out: Vec<T>,
    out_side: usize,
}

impl<T: Real> Tape<T> {
    pub fn latent(&self) -> &[T] {
        &self.latent
    }

    pub fn image(&self, timestamp_ns: u64) -> ImageFrame<T> {
        let s = self.out_side;
        let mut data = Vec::with_capacity(s * s * 3);
        for y in 0..s {
            for x in 0..s {
                for c in 0..3 {
                    data.push(self.out[(c * s + y) * s + x]);
                }
            }
        }
        ImageFrame::from_vec(s, s, data, timestamp_ns)
    }

    /// Sum of squared errors against `target` and its gradient with respect to
    /// the output (channel-major).
    pub fn squared_error(&self, target: &ImageFrame<T>) -> (T, Vec<T>) {
        let s = self.out_side;
        let mut loss = T::zero();
        let mut grad = vec![T::zero(); self.out.len()];
        for c in 0..3 {
            for y in 0..s {
                for x in 0..s {
                    let i = (c * s + y) * s + x;
                    let e = self.out[i] - target.get(y, x, c);
                    loss += e * e;
                    grad[i] = T::lit(2.0) * e;
                }
            }
        }
        (loss, grad)
    }
}

fn slice<'a, T>(p: &'a [T], r: &Range<usize>) -> &'a [T] {
    &p[r.clone()]
}

/// Mutable views of two disjoint ranges, `a` before `b`.
fn two_mut<'a, T>(g: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

pub fn forward<T: Real>(model: &Model<T>, input: &AmplitudeWindow<T>) -> Tape<T> {
    let hp = &model.hyper;
    let lay = model.layout();
    let p = &model.params;
    let (n_ch, n_sub, len) = input.dims();
    let d = hp.d_model;
    let din = hp.token_dim();
    let f = hp.d_ffn;
    let nh = hp.n_heads;
    let hd = hp.head_dim();
    let scale = T::one() / T::from_usize_lossy(hd).sqrt();

    // One token per time step: tokens[t][c·S + s].
    let mut tokens = vec![T::zero(); len * din];
    for c in 0..n_ch {
        for s in 0..n_sub {
            for (t, &v) in input.series(c, s).iter().enumerate() {
                tokens[t * din + c * n_sub + s] = v;
            }
        }
    }

    let mut h = vec![T::zero(); len * d];
    matmul_acc(&tokens, slice(p, &lay.in_w), &mut h, len, din, d);
    add_bias(&mut h, slice(p, &lay.in_b));
    for (v, &pe) in h.iter_mut().zip(slice(p, &lay.pos)) {
        *v += pe;
    }

    let mut blocks = Vec::with_capacity(lay.blocks.len());
    for bs in &lay.blocks {
        let mut a = vec![T::zero(); len * d];
        let mut ln1_xhat = vec![T::zero(); len * d];
        let mut ln1_rstd = vec![T::zero(); len];
        layer_norm(&h, slice(p, &bs.ln1.gain), slice(p, &bs.ln1.bias), &mut a, &mut ln1_xhat, &mut ln1_rstd);

        let project = |w: &Range<usize>, b: &Range<usize>| {
            let mut out = vec![T::zero(); len * d];
            matmul_acc(&a, slice(p, w), &mut out, len, d, d);
            add_bias(&mut out, slice(p, b));
            out
        };
        let q = project(&bs.wq, &bs.bq);
        let k = project(&bs.wk, &bs.bk);
        let v = project(&bs.wv, &bs.bv);

        let mut probs = vec![T::zero(); nh * len * len];
        let mut ctx = vec![T::zero(); len * d];
        for head in 0..nh {
            let cols = head * hd..(head + 1) * hd;
            for i in 0..len {
                let row = &mut probs[(head * len + i) * len..(head * len + i + 1) * len];
                let qi = &q[i * d + cols.start..i * d + cols.end];
                for (j, sc) in row.iter_mut().enumerate() {
                    let kj = &k[j * d + cols.start..j * d + cols.end];
                    let mut s = T::zero();
                    for (&x, &y) in qi.iter().zip(kj) {
                        s += x * y;
                    }
                    *sc = s * scale;
                }
                softmax_row(row);
                let ci = &mut ctx[i * d + cols.start..i * d + cols.end];
                for (j, &pij) in row.iter().enumerate() {
                    let vj = &v[j * d + cols.start..j * d + cols.end];
                    for (o, &vv) in ci.iter_mut().zip(vj) {
                        *o += pij * vv;
                    }
                }
            }
        }

        matmul_acc(&ctx, slice(p, &bs.wo), &mut h, len, d, d);
        add_bias(&mut h, slice(p, &bs.bo));

        let mut b = vec![T::zero(); len * d];
        let mut ln2_xhat = vec![T::zero(); len * d];
        let mut ln2_rstd = vec![T::zero(); len];
        layer_norm(&h, slice(p, &bs.ln2.gain), slice(p, &bs.ln2.bias), &mut b, &mut ln2_xhat, &mut ln2_rstd);

        let mut f_pre = vec![T::zero(); len * f];
        matmul_acc(&b, slice(p, &bs.w1), &mut f_pre, len, d, f);
        add_bias(&mut f_pre, slice(p, &bs.b1));
        let f_act: Vec<T> = f_pre.iter().map(|&x| gelu(x)).collect();
        matmul_acc(&f_act, slice(p, &bs.w2), &mut h, len, f, d);
        add_bias(&mut h, slice(p, &bs.b2));

        blocks.push(BlockTape {
            ln1_xhat,
            ln1_rstd,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            ln2_xhat,
            ln2_rstd,
            b,
            f_pre,
            f_act,
        });
    }

    let mut hf = vec![T::zero(); len * d];
    let mut lnf_xhat = vec![T::zero(); len * d];
    let mut lnf_rstd = vec![T::zero(); len];
    layer_norm(&h, slice(p, &lay.lnf.gain), slice(p, &lay.lnf.bias), &mut hf, &mut lnf_xhat, &mut lnf_rstd);

    let inv_len = T::one() / T::from_usize_lossy(len);
    let mut latent = vec![T::zero(); d];
    col_sum_acc(&hf, &mut latent);
    for z in &mut latent {
        *z *= inv_len;
    }

    let g = hp.seed_grid;
    let n_seed = hp.base_ch * g * g;
    let mut feat = slice(p, &lay.dec_b).to_vec();
    matmul_acc(&latent, slice(p, &lay.dec_w), &mut feat, 1, d, n_seed);

    let mut side = g;
    let mut stages = Vec::with_capacity(lay.stages.len());
    let n_stages = lay.stages.len();
    for (si, st) in lay.stages.iter().enumerate() {
        let up = upsample2(&feat, st.c_in, side, side);
        let pre = conv3x3(&up, slice(p, &st.weight), slice(p, &st.bias), st.c_in, st.c_out, 2 * side, 2 * side);
        feat = if si + 1 == n_stages {
            pre.iter().map(|&x| sigmoid(x)).collect()
        } else {
            pre.iter().map(|&x| gelu(x)).collect()
        };
        stages.push(StageTape { side, up, pre });
        side *= 2;
    }

    Tape {
        tokens,
        blocks,
        lnf_xhat,
        lnf_rstd,
        latent,
        stages,
        out: feat,
        out_side: side,
    }
}

/// Accumulates `∂loss/∂θ` into `grad`, given `d_out = ∂loss/∂output`
/// (channel-major, matching the tape's output).
pub fn backward<T: Real>(model: &Model<T>, tape: &Tape<T>, d_out: &[T], grad: &mut [T]) {
    let hp = &model.hyper;
    let lay = model.layout();
    let p = &model.params;
    let len = hp.window_len;
    let d = hp.d_model;
    let din = hp.token_dim();
    let f = hp.d_ffn;
    let nh = hp.n_heads;
    let hd = hp.head_dim();
    let scale = T::one() / T::from_usize_lossy(hd).sqrt();

    // Through the logistic output.
    let mut dfeat: Vec<T> = d_out
        .iter()
        .zip(&tape.out)
        .map(|(&g, &y)| g * y * (T::one() - y))
        .collect();

    let n_stages = lay.stages.len();
    for (si, (st, tp)) in lay.stages.iter().zip(&tape.stages).enumerate().rev() {
        let dpre: Vec<T> = if si + 1 == n_stages {
            dfeat
        } else {
            dfeat.iter().zip(&tp.pre).map(|(&g, &x)| g * gelu_grad(x)).collect()
        };
        let side2 = 2 * tp.side;
        let (dw, db) = two_mut(grad, &st.weight, &st.bias);
        let dup = conv3x3_backward(&dpre, &tp.up, slice(p, &st.weight), st.c_in, st.c_out, side2, side2, dw, db);
        dfeat = upsample2_backward(&dup, st.c_in, tp.side, tp.side);
    }

    // Decoder projection.
    let n_seed = dfeat.len();
    {
        let (dw, db) = two_mut(grad, &lay.dec_w, &lay.dec_b);
        matmul_tn_acc(&tape.latent, &dfeat, dw, 1, d, n_seed);
        for (o, &g) in db.iter_mut().zip(&dfeat) {
            *o += g;
        }
    }
    let mut dlatent = vec![T::zero(); d];
    matmul_nt_acc(&dfeat, slice(p, &lay.dec_w), &mut dlatent, 1, n_seed, d);

    // Mean pool, then final layer norm.
    let inv_len = T::one() / T::from_usize_lossy(len);
    let mut dhf = vec![T::zero(); len * d];
    for row in dhf.chunks_exact_mut(d) {
        for (o, &g) in row.iter_mut().zip(&dlatent) {
            *o = g * inv_len;
        }
    }
    let mut dh = vec![T::zero(); len * d];
    {
        let (dg, db) = two_mut(grad, &lay.lnf.gain, &lay.lnf.bias);
        layer_norm_backward(&dhf, &tape.lnf_xhat, &tape.lnf_rstd, slice(p, &lay.lnf.gain), &mut dh, dg, db);
    }

    for (bs, bt) in lay.blocks.iter().zip(&tape.blocks).rev() {
        // Feed-forward residual branch.
        col_sum_acc(&dh, &mut grad[bs.b2.clone()]);
        matmul_tn_acc(&bt.f_act, &dh, &mut grad[bs.w2.clone()], len, f, d);
        let mut df = vec![T::zero(); len * f];
        matmul_nt_acc(&dh, slice(p, &bs.w2), &mut df, len, d, f);
        for (g, &x) in df.iter_mut().zip(&bt.f_pre) {
            *g *= gelu_grad(x);
        }
        col_sum_acc(&df, &mut grad[bs.b1.clone()]);
        matmul_tn_acc(&bt.b, &df, &mut grad[bs.w1.clone()], len, d, f);
        let mut db_ln = vec![T::zero(); len * d];
        matmul_nt_acc(&df, slice(p, &bs.w1), &mut db_ln, len, f, d);
        {
            let (dg, dbias) = two_mut(grad, &bs.ln2.gain, &bs.ln2.bias);
            layer_norm_backward(&db_ln, &bt.ln2_xhat, &bt.ln2_rstd, slice(p, &bs.ln2.gain), &mut dh, dg, dbias);
        }

        // Attention residual branch.
        col_sum_acc(&dh, &mut grad[bs.bo.clone()]);
        matmul_tn_acc(&bt.ctx, &dh, &mut grad[bs.wo.clone()], len, d, d);
        let mut dctx = vec![T::zero(); len * d];
        matmul_nt_acc(&dh, slice(p, &bs.wo), &mut dctx, len, d, d);

        let mut dq = vec![T::zero(); len * d];
        let mut dk = vec![T::zero(); len * d];
        let mut dv = vec![T::zero(); len * d];
        let mut dp = vec![T::zero(); len];
        for head in 0..nh {
            let c0 = head * hd;
            for i in 0..len {
                let row = &bt.probs[(head * len + i) * len..(head * len + i + 1) * len];
                let dci = &dctx[i * d + c0..i * d + c0 + hd];
                let mut dot = T::zero();
                for j in 0..len {
                    let vj = &bt.v[j * d + c0..j * d + c0 + hd];
                    let mut s = T::zero();
                    for (&x, &y) in dci.iter().zip(vj) {
                        s += x * y;
                    }
                    dp[j] = s;
                    dot += row[j] * s;
                    let dvj = &mut dv[j * d + c0..j * d + c0 + hd];
                    for (o, &g) in dvj.iter_mut().zip(dci) {
                        *o += row[j] * g;
                    }
                }
                let qi = &bt.q[i * d + c0..i * d + c0 + hd];
                for j in 0..len {
                    let ds = row[j] * (dp[j] - dot) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    let kj = &bt.k[j * d + c0..j * d + c0 + hd];
                    let dqi = &mut dq[i * d + c0..i * d + c0 + hd];
                    for (o, &kv) in dqi.iter_mut().zip(kj) {
                        *o += ds * kv;
                    }
                    let dkj = &mut dk[j * d + c0..j * d + c0 + hd];
                    for (o, &qv) in dkj.iter_mut().zip(qi) {
                        *o += ds * qv;
                    }
                }
            }
        }

        let mut da = vec![T::zero(); len * d];
        for (dx, w, b) in [(&dq, &bs.wq, &bs.bq), (&dk, &bs.wk, &bs.bk), (&dv, &bs.wv, &bs.bv)] {
            col_sum_acc(dx, &mut grad[b.clone()]);
            matmul_tn_acc(&bt.a, dx, &mut grad[w.clone()], len, d, d);
            matmul_nt_acc(dx, slice(p, w), &mut da, len, d, d);
        }
        {
            let (dg, dbias) = two_mut(grad, &bs.ln1.gain, &bs.ln1.bias);
            layer_norm_backward(&da, &bt.ln1_xhat, &bt.ln1_rstd, slice(p, &bs.ln1.gain), &mut dh, dg, dbias);
        }
    }

    // Input projection and positional encodings.
    col_sum_acc(&dh, &mut grad[lay.in_b.clone()]);
    for (o, &g) in grad[lay.pos.clone()].iter_mut().zip(&dh) {
        *o += g;
    }
    matmul_tn_acc(&tape.tokens, &dh, &mut grad[lay.in_w.clone()], len, din, d);
}
