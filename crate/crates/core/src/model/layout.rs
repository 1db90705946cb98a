//! Flat parameter layout.
//!
//! Tensors are stored back to back, row-major, in this order:
//!
//! | tensor            | shape                                  |
//! |-------------------|----------------------------------------|
//! | `in_w`, `in_b`    | `[n_channels·n_subcarriers, d_model]`, `[d_model]` |
//! | `pos`             | `[window_len, d_model]`                |
//! | per layer         | `ln1_g, ln1_b [d]`, `wq bq wk bk wv bv wo bo` (`[d, d]`, `[d]`), `ln2_g, ln2_b [d]`, `w1 [d, d_ffn]`, `b1 [d_ffn]`, `w2 [d_ffn, d]`, `b2 [d]` |
//! | `lnf_g`, `lnf_b`  | `[d_model]`                            |
//! | `dec_w`, `dec_b`  | `[d_model, base_ch·g·g]`, `[base_ch·g·g]` |
//! | per stage         | `conv_w [c_out, c_in, 3, 3]`, `conv_b [c_out]` |
//!
//! Decoder stages all read `base_ch` channels; every stage writes `base_ch`
//! channels except the last, which writes the 3 output channels.

use std::ops::Range;

use super::HyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight { fan_in: usize, fan_out: usize },
    Bias,
    Gain,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub range: Range<usize>,
    pub kind: TensorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerNormSlots {
    pub gain: Range<usize>,
    pub bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSlots {
    pub ln1: LayerNormSlots,
    pub wq: Range<usize>,
    pub bq: Range<usize>,
    pub wk: Range<usize>,
    pub bk: Range<usize>,
    pub wv: Range<usize>,
    pub bv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
    pub ln2: LayerNormSlots,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSlots {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub in_w: Range<usize>,
    pub in_b: Range<usize>,
    pub pos: Range<usize>,
    pub blocks: Vec<BlockSlots>,
    pub lnf: LayerNormSlots,
    pub dec_w: Range<usize>,
    pub dec_b: Range<usize>,
    pub stages: Vec<StageSlots>,
    pub tensors: Vec<TensorSpec>,
    pub len: usize,
}

struct Builder {
    cursor: usize,
    tensors: Vec<TensorSpec>,
}

impl Builder {
    fn take(&mut self, name: String, n: usize, kind: TensorKind) -> Range<usize> {
        let r = self.cursor..self.cursor + n;
        self.cursor += n;
        self.tensors.push(TensorSpec {
            name,
            range: r.clone(),
            kind,
        });
        r
    }

    fn weight(&mut self, name: String, fan_in: usize, fan_out: usize, n: usize) -> Range<usize> {
        self.take(name, n, TensorKind::Weight { fan_in, fan_out })
    }

    fn matrix(&mut self, name: String, rows: usize, cols: usize) -> Range<usize> {
        self.weight(name, rows, cols, rows * cols)
    }

    fn bias(&mut self, name: String, n: usize) -> Range<usize> {
        self.take(name, n, TensorKind::Bias)
    }

    fn layer_norm(&mut self, name: &str, d: usize) -> LayerNormSlots {
        LayerNormSlots {
            gain: self.take(format!("{name}.gain"), d, TensorKind::Gain),
            bias: self.take(format!("{name}.bias"), d, TensorKind::Bias),
        }
    }
}

impl Layout {
    /// Assumes `hyper` has been validated.
    pub fn new(hyper: &HyperParams) -> Self {
        let d = hyper.d_model;
        let f = hyper.d_ffn;
        let d_in = hyper.n_channels * hyper.n_subcarriers;
        let mut b = Builder {
            cursor: 0,
            tensors: Vec::new(),
        };

        let in_w = b.matrix("in.w".into(), d_in, d);
        let in_b = b.bias("in.b".into(), d);
        let pos = b.matrix("pos".into(), hyper.window_len, d);

        let blocks = (0..hyper.n_layers)
            .map(|i| {
                let p = |s: &str| format!("block{i}.{s}");
                BlockSlots {
                    ln1: b.layer_norm(&p("ln1"), d),
                    wq: b.matrix(p("wq"), d, d),
                    bq: b.bias(p("bq"), d),
                    wk: b.matrix(p("wk"), d, d),
                    bk: b.bias(p("bk"), d),
                    wv: b.matrix(p("wv"), d, d),
                    bv: b.bias(p("bv"), d),
                    wo: b.matrix(p("wo"), d, d),
                    bo: b.bias(p("bo"), d),
                    ln2: b.layer_norm(&p("ln2"), d),
                    w1: b.matrix(p("w1"), d, f),
                    b1: b.bias(p("b1"), f),
                    w2: b.matrix(p("w2"), f, d),
                    b2: b.bias(p("b2"), d),
                }
            })
            .collect();

        let lnf = b.layer_norm("lnf", d);
        let g = hyper.seed_grid;
        let dec_w = b.matrix("dec.w".into(), d, hyper.base_ch * g * g);
        let dec_b = b.bias("dec.b".into(), hyper.base_ch * g * g);

        let n_stages = hyper.upsample_stages();
        let stages = (0..n_stages)
            .map(|s| {
                let c_in = hyper.base_ch;
                let c_out = if s + 1 == n_stages { 3 } else { hyper.base_ch };
                StageSlots {
                    c_in,
                    c_out,
                    weight: b.weight(format!("stage{s}.w"), c_in * 9, c_out * 9, c_out * c_in * 9),
                    bias: b.bias(format!("stage{s}.b"), c_out),
                }
            })
            .collect();

        Layout {
            in_w,
            in_b,
            pos,
            blocks,
            lnf,
            dec_w,
            dec_b,
            stages,
            len: b.cursor,
            tensors: b.tensors,
        }
    }
}
