//! Model file format, little-endian throughout:
//!
//! ```text
//! "CSIM"  u32 version = 1
//! u32 × 12  n_channels n_subcarriers window_len d_model n_heads n_layers
//!           d_ffn out_h out_w seed_grid base_ch batch_size
//! f64 × 2   learning_rate momentum
//! u64       parameter count
//! f32 × n   parameters in layout order
//! ```

use std::fs;
use std::path::Path;

use super::{HyperParams, Layout, Model};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MODEL_MAGIC: &[u8; 4] = b"CSIM";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model<T: Real>(model: &Model<T>) -> Vec<u8> {
    let h = &model.hyper;
    let mut out = Vec::with_capacity(4 + 4 + 48 + 16 + 8 + 4 * model.params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [
        h.n_channels,
        h.n_subcarriers,
        h.window_len,
        h.d_model,
        h.n_heads,
        h.n_layers,
        h.d_ffn,
        h.out_h,
        h.out_w,
        h.seed_grid,
        h.base_ch,
        h.batch_size,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&h.learning_rate.to_le_bytes());
    out.extend_from_slice(&h.momentum.to_le_bytes());
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&(p.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        if end > self.bytes.len() {
            return Err(Error::format(self.bytes.len() as u64, format!("truncated model file while reading {what}")));
        }
        let mut buf = [0u8; N];
        buf.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }
}

pub fn decode_model<T: Real>(bytes: &[u8]) -> Result<Model<T>> {
    let mut c = Cursor { bytes, pos: 0 };
    if &c.take::<4>("magic")? != MODEL_MAGIC {
        return Err(Error::format(0, "bad magic, expected CSIM"));
    }
    let version = c.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::format(4, format!("unsupported model version {version}")));
    }
    let mut dims = [0usize; 12];
    for d in &mut dims {
        *d = c.u32("hyperparameters")? as usize;
    }
    let learning_rate = f64::from_le_bytes(c.take::<8>("learning rate")?);
    let momentum = f64::from_le_bytes(c.take::<8>("momentum")?);
    let hyper = HyperParams {
        n_channels: dims[0],
        n_subcarriers: dims[1],
        window_len: dims[2],
        d_model: dims[3],
        n_heads: dims[4],
        n_layers: dims[5],
        d_ffn: dims[6],
        out_h: dims[7],
        out_w: dims[8],
        seed_grid: dims[9],
        base_ch: dims[10],
        batch_size: dims[11],
        learning_rate,
        momentum,
    };
    hyper
        .validate()
        .map_err(|e| Error::format(8, format!("invalid hyperparameter block: {e}")))?;

    let count_offset = c.pos as u64;
    let count = u64::from_le_bytes(c.take::<8>("parameter count")?) as usize;
    let expected = Layout::new(&hyper).len;
    if count != expected {
        return Err(Error::format(
            count_offset,
            format!("header declares {count} parameters but the hyperparameters imply {expected}"),
        ));
    }
    let payload = bytes.len() - c.pos;
    if payload != 4 * count {
        return Err(Error::format(
            bytes.len().min(c.pos + 4 * count) as u64,
            format!("parameter payload is {payload} bytes, expected {}", 4 * count),
        ));
    }
    let params = bytes[c.pos..]
        .chunks_exact(4)
        .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect();
    Model::from_params(hyper, params)
}

pub fn save_model<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model<T: Real>(path: &Path) -> Result<Model<T>> {
    decode_model(&fs::read(path)?)
}
