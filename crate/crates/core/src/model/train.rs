use rand::seq::SliceRandom;

use super::net;
use super::{HyperParams, Model};
use crate::error::{Error, Result};
use crate::ingest::AlignedPair;
use crate::rng;
use crate::scalar::Real;

pub const PRETRAIN_EPOCHS: usize = 50;
pub const UPDATE_EPOCHS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn from_hyper(hyper: &HyperParams, epochs: usize, shuffle_seed: u64) -> Self {
        Self {
            epochs,
            learning_rate: hyper.learning_rate,
            momentum: hyper.momentum,
            batch_size: hyper.batch_size,
            shuffle_seed,
        }
    }

    /// Initial training budget: 50 epochs.
    pub fn pretrain(hyper: &HyperParams, shuffle_seed: u64) -> Self {
        Self::from_hyper(hyper, PRETRAIN_EPOCHS, shuffle_seed)
    }

    /// Per-slot update budget: 30 epochs.
    pub fn update(hyper: &HyperParams, shuffle_seed: u64) -> Self {
        Self::from_hyper(hyper, UPDATE_EPOCHS, shuffle_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || self.batch_size == 0 {
            return Err(Error::Config(
                "training needs learning_rate > 0, momentum in [0, 1), batch_size >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Pairwise (tree) summation in index order: split at `n / 2`, recurse, add.
/// The grouping depends only on the length, so results are reproducible.
pub fn pairwise_sum<T: Real>(items: &[T]) -> T {
    match items.len() {
        0 => T::zero(),
        1 => items[0],
        n => pairwise_sum(&items[..n / 2]) + pairwise_sum(&items[n / 2..]),
    }
}

fn pairwise_sum_vecs<T: Real>(items: &mut [Vec<T>]) -> Vec<T> {
    match items.len() {
        1 => std::mem::take(&mut items[0]),
        n => {
            let (lo, hi) = items.split_at_mut(n / 2);
            let mut a = pairwise_sum_vecs(lo);
            let b = pairwise_sum_vecs(hi);
            for (x, y) in a.iter_mut().zip(&b) {
                *x += *y;
            }
            a
        }
    }
}

fn check_pair<T: Real>(model: &Model<T>, pair: &AlignedPair<T>) -> Result<()> {
    model.check_input(&pair.window)?;
    let want = (model.hyper.out_h, model.hyper.out_w);
    if pair.frame.dims() != want {
        return Err(Error::Dimension(format!(
            "target frame is {:?}, model outputs {:?}",
            pair.frame.dims(),
            want
        )));
    }
    Ok(())
}

fn batch_gradient<T: Real>(model: &Model<T>, batch: &[&AlignedPair<T>]) -> Result<(T, Vec<T>)> {
    if batch.is_empty() {
        return Err(Error::Training("empty batch".into()));
    }
    let n_params = model.params.len();
    let mut losses = Vec::with_capacity(batch.len());
    let mut grads = Vec::with_capacity(batch.len());
    for pair in batch {
        check_pair(model, pair)?;
        let tape = net::forward(model, &pair.window);
        let (sse, d_out) = tape.squared_error(&pair.frame);
        let mut g = vec![T::zero(); n_params];
        net::backward(model, &tape, &d_out, &mut g);
        losses.push(sse);
        grads.push(g);
    }
    let count = T::from_usize_lossy(batch.len() * model.hyper.out_h * model.hyper.out_w * 3);
    let loss = pairwise_sum(&losses) / count;
    let mut grad = pairwise_sum_vecs(&mut grads);
    for g in &mut grad {
        *g /= count;
    }
    Ok((loss, grad))
}

/// Mean squared pixel error over the batch and its exact gradient, laid out
/// like `model.params`.
pub fn loss_and_gradients<T: Real>(model: &Model<T>, batch: &[AlignedPair<T>]) -> Result<(T, Vec<T>)> {
    let refs: Vec<&AlignedPair<T>> = batch.iter().collect();
    batch_gradient(model, &refs)
}

/// Minibatch SGD with momentum (`v ← μv − ηg`, `θ ← θ + v`). Each epoch visits
/// the data in a shuffle keyed by `(shuffle_seed, epoch)`; the final partial
/// batch is kept. Returns a new model; the input is untouched.
pub fn train_epochs<T: Real>(model: &Model<T>, data: &[AlignedPair<T>], cfg: &TrainConfig) -> Result<Model<T>> {
    cfg.validate()?;
    let mut out = model.clone();
    if cfg.epochs == 0 {
        return Ok(out);
    }
    if data.is_empty() {
        return Err(Error::Training("no training pairs".into()));
    }
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let mut velocity = vec![T::zero(); out.params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::keyed_rng(&[cfg.shuffle_seed, epoch as u64]));
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&AlignedPair<T>> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grad) = batch_gradient(&out, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    slot: None,
                    epoch,
                    batch: bi,
                });
            }
            for ((p, v), &g) in out.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = mu * *v - lr * g;
                *p += *v;
            }
            if out.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    slot: None,
                    epoch,
                    batch: bi,
                });
            }
        }
    }
    out.version += 1;
    Ok(out)
}
