//! CSI-to-image network: a pre-norm transformer encoder over amplitude
//! windows (one token per time step) and a convolutional upsampling decoder.

mod io;
mod layout;
mod net;
mod ops;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageFrame;
use crate::ingest::AmplitudeWindow;
use crate::rng;
use crate::scalar::Real;

pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use layout::{BlockSlots, LayerNormSlots, Layout, StageSlots, TensorKind, TensorSpec};
pub use net::Tape;
pub use train::{loss_and_gradients, pairwise_sum, train_epochs, TrainConfig, PRETRAIN_EPOCHS, UPDATE_EPOCHS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_channels: usize,
    pub n_subcarriers: usize,
    pub window_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ffn: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Side of the square grid the decoder starts from.
    pub seed_grid: usize,
    /// Feature channels carried through the decoder.
    pub base_ch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_channels: 4,
            n_subcarriers: 64,
            window_len: 50,
            d_model: 32,
            n_heads: 2,
            n_layers: 2,
            d_ffn: 64,
            out_h: 32,
            out_w: 32,
            seed_grid: 4,
            base_ch: 16,
            learning_rate: 0.15,
            momentum: 0.9,
            batch_size: 16,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n_channels,
            self.n_subcarriers,
            self.window_len,
            self.d_model,
            self.n_heads,
            self.n_layers,
            self.d_ffn,
            self.out_h,
            self.out_w,
            self.seed_grid,
            self.base_ch,
            self.batch_size,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("all model dimensions must be at least 1".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.out_h != self.out_w {
            return Err(Error::Config("decoder output must be square".into()));
        }
        let ratio = self.out_h / self.seed_grid;
        if !self.out_h.is_multiple_of(self.seed_grid) || ratio < 2 || !ratio.is_power_of_two() {
            return Err(Error::Config(format!(
                "output side {} must be seed_grid {} times 2^u with u >= 1",
                self.out_h, self.seed_grid
            )));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("learning rate must be > 0 and momentum in [0, 1)".into()));
        }
        Ok(())
    }

    /// Number of 2× upsampling stages in the decoder.
    pub fn upsample_stages(&self) -> usize {
        (self.out_h / self.seed_grid).trailing_zeros() as usize
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn token_dim(&self) -> usize {
        self.n_channels * self.n_subcarriers
    }

    pub fn parameter_count(&self) -> usize {
        Layout::new(self).len
    }
}

/// Parameters plus hyperparameters. `version` counts completed updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub hyper: HyperParams,
    pub params: Vec<T>,
    pub version: u64,
    layout: Layout,
}

impl<T: Real> Model<T> {
    pub fn from_params(hyper: HyperParams, params: Vec<T>) -> Result<Self> {
        hyper.validate()?;
        let layout = Layout::new(&hyper);
        if params.len() != layout.len {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                layout.len,
                params.len()
            )));
        }
        Ok(Self {
            hyper,
            params,
            version: 0,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Rounds every parameter through `f32`, the model file's storage type.
    pub fn quantized(&self) -> Self {
        let mut m = self.clone();
        for p in &mut m.params {
            *p = T::lit(p.to_f64_lossy() as f32 as f64);
        }
        m
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            hyper: self.hyper.clone(),
            params: self.params.iter().map(|p| p.cast()).collect(),
            version: self.version,
            layout: self.layout.clone(),
        }
    }

    pub fn check_input(&self, input: &AmplitudeWindow<T>) -> Result<()> {
        let h = &self.hyper;
        let want = (h.n_channels, h.n_subcarriers, h.window_len);
        if input.dims() != want {
            return Err(Error::Dimension(format!(
                "window is {:?}, model expects {:?}",
                input.dims(),
                want
            )));
        }
        Ok(())
    }

    /// Predicted frame for one amplitude window; values lie in (0, 1).
    pub fn forward(&self, input: &AmplitudeWindow<T>) -> Result<ImageFrame<T>> {
        self.check_input(input)?;
        let tape = net::forward(self, input);
        Ok(tape.image(input.anchor_timestamp_ns))
    }

    /// Mean-pooled encoder output for one window.
    pub fn latent(&self, input: &AmplitudeWindow<T>) -> Result<Vec<T>> {
        self.check_input(input)?;
        Ok(net::forward(self, input).latent().to_vec())
    }
}

/// Glorot-uniform weights, zero biases, unit layer-norm gains.
pub fn init_model<T: Real>(hyper: &HyperParams, seed: u64) -> Result<Model<T>> {
    hyper.validate()?;
    let layout = Layout::new(hyper);
    let mut params = vec![T::zero(); layout.len];
    for (i, t) in layout.tensors.iter().enumerate() {
        match t.kind {
            TensorKind::Weight { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut r = rng::keyed_rng(&[seed, 0x1A17, i as u64]);
                for p in &mut params[t.range.clone()] {
                    *p = T::lit(r.gen_range(-bound..=bound));
                }
            }
            TensorKind::Bias => {}
            TensorKind::Gain => params[t.range.clone()].fill(T::one()),
        }
    }
    Model::from_params(hyper.clone(), params)
}
