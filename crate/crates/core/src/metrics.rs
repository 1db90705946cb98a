//! Image quality scoring: PSNR, uniform-window SSIM, and per-slot means.

use crate::error::{Error, Result};
use crate::image::{ImageFrame, CHANNELS};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    /// Side of the uniform square window; odd and at least 3.
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 7,
            c1: 1e-4,
            c2: 9e-4,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config("SSIM window must be odd and at least 3".into()));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::Config("SSIM constants must be positive".into()));
        }
        Ok(())
    }
}

/// Mean SSIM and mean PSNR over a set of predicted/truth pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub mean_ssim: f64,
    /// `f64::INFINITY` when every pair is a perfect reconstruction.
    pub mean_psnr_db: f64,
    pub n_pairs: usize,
}

fn check_dims<T: Real>(a: &ImageFrame<T>, b: &ImageFrame<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Metric(format!(
            "image dimensions differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

pub fn mse<T: Real>(a: &ImageFrame<T>, b: &ImageFrame<T>) -> Result<T> {
    check_dims(a, b)?;
    let sum: T = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(sum / T::from_usize_lossy(a.data().len()))
}

/// PSNR in dB for images in [0, 1]; `+∞` when the images are identical.
pub fn psnr<T: Real>(a: &ImageFrame<T>, b: &ImageFrame<T>) -> Result<T> {
    let m = mse(a, b)?;
    if m == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (T::one() / m).log10())
}

/// Summed-area table over one channel, with a zero row and column in front.
fn integral<T: Real>(h: usize, w: usize, f: impl Fn(usize, usize) -> T) -> Vec<T> {
    let stride = w + 1;
    let mut s = vec![T::zero(); (h + 1) * stride];
    for y in 0..h {
        let mut row = T::zero();
        for x in 0..w {
            row += f(y, x);
            s[(y + 1) * stride + x + 1] = s[y * stride + x + 1] + row;
        }
    }
    s
}

/// Mean SSIM over every `window × window` placement (stride 1) and channel,
/// with population statistics inside each window.
pub fn ssim<T: Real>(a: &ImageFrame<T>, b: &ImageFrame<T>, cfg: &SsimConfig) -> Result<T> {
    check_dims(a, b)?;
    cfg.validate()?;
    let (h, w) = a.dims();
    let k = cfg.window;
    if h < k || w < k {
        return Err(Error::Metric(format!("image {h}x{w} is smaller than the {k}x{k} SSIM window")));
    }
    let c1 = T::lit(cfg.c1);
    let c2 = T::lit(cfg.c2);
    let two = T::lit(2.0);
    let n = T::from_usize_lossy(k * k);
    let stride = w + 1;
    let box_sum = |s: &[T], y: usize, x: usize| s[(y + k) * stride + x + k] - s[y * stride + x + k] - s[(y + k) * stride + x] + s[y * stride + x];

    let mut total = T::zero();
    for c in 0..CHANNELS {
        let sa = integral(h, w, |y, x| a.get(y, x, c));
        let sb = integral(h, w, |y, x| b.get(y, x, c));
        let saa = integral(h, w, |y, x| a.get(y, x, c) * a.get(y, x, c));
        let sbb = integral(h, w, |y, x| b.get(y, x, c) * b.get(y, x, c));
        let sab = integral(h, w, |y, x| a.get(y, x, c) * b.get(y, x, c));
        for y in 0..=h - k {
            for x in 0..=w - k {
                let mu_a = box_sum(&sa, y, x) / n;
                let mu_b = box_sum(&sb, y, x) / n;
                let var_a = box_sum(&saa, y, x) / n - mu_a * mu_a;
                let var_b = box_sum(&sbb, y, x) / n - mu_b * mu_b;
                let cov = box_sum(&sab, y, x) / n - mu_a * mu_b;
                let num = (two * mu_a * mu_b + c1) * (two * cov + c2);
                let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                total += (num / den).max(-T::one()).min(T::one());
            }
        }
    }
    Ok(total / T::from_usize_lossy(CHANNELS * (h - k + 1) * (w - k + 1)))
}

/// Slot score: arithmetic mean of per-pair SSIM, and mean of the finite
/// per-pair PSNR values (`+∞` only if every pair is perfect).
pub fn score_slot<T: Real>(predicted: &[ImageFrame<T>], truth: &[ImageFrame<T>], cfg: &SsimConfig) -> Result<QualityScore> {
    if predicted.is_empty() {
        return Err(Error::Metric("cannot score an empty slot".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} ground-truth frames",
            predicted.len(),
            truth.len()
        )));
    }
    let mut ssim_sum = 0.0;
    let mut psnr_sum = 0.0;
    let mut finite = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        ssim_sum += ssim(p, t, cfg)?.to_f64_lossy();
        let db = psnr(p, t)?.to_f64_lossy();
        if db.is_finite() {
            psnr_sum += db;
            finite += 1;
        }
    }
    let n = predicted.len();
    Ok(QualityScore {
        mean_ssim: ssim_sum / n as f64,
        mean_psnr_db: if finite == 0 { f64::INFINITY } else { psnr_sum / finite as f64 },
        n_pairs: n,
    })
}
