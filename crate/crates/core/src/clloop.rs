//! Threshold-gated continual learning.
//!
//! For every time slot the previous model predicts the slot's frames; if the
//! mean quality score falls below the threshold the model is fine-tuned on
//! that slot, otherwise it is carried forward unchanged. After each slot the
//! current model is published to a [`ServingState`] from which inference
//! requests take immutable snapshots.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use parking_lot::RwLock;

use crate::error::{Error, Result};
use crate::image::ImageFrame;
use crate::ingest::{AmplitudeWindow, SlotBatch};
use crate::metrics::{score_slot, QualityScore, SsimConfig};
use crate::model::{train_epochs, Model, TrainConfig};
use crate::rng;
use crate::scalar::Real;

pub const DEFAULT_SSIM_TH: f64 = 0.9;
pub const DEFAULT_PSNR_TH_DB: f64 = 28.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub ssim_min: f64,
    pub psnr_min_db: f64,
}

impl Default for Threshold {
    fn default() -> Self {
        Self {
            ssim_min: DEFAULT_SSIM_TH,
            psnr_min_db: DEFAULT_PSNR_TH_DB,
        }
    }
}

impl Threshold {
    pub const NEVER: Threshold = Threshold {
        ssim_min: f64::NEG_INFINITY,
        psnr_min_db: f64::NEG_INFINITY,
    };
    pub const ALWAYS: Threshold = Threshold {
        ssim_min: f64::INFINITY,
        psnr_min_db: f64::INFINITY,
    };
}

/// `true` means update: fires when either mean SSIM or mean PSNR is strictly
/// below its threshold.
pub fn gate(score: &QualityScore, th: &Threshold) -> bool {
    score.mean_ssim < th.ssim_min || score.mean_psnr_db < th.psnr_min_db
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub slot_index: usize,
    /// Absent for empty slots.
    pub score_before: Option<QualityScore>,
    pub updated: bool,
    pub epochs_run: usize,
    pub score_after: Option<QualityScore>,
    pub wall_time_s: f64,
}

/// Immutable view of the latest published model.
#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    pub model: Arc<Model<T>>,
    pub generation: u64,
}

impl<T> std::ops::Deref for Snapshot<T> {
    type Target = Model<T>;

    fn deref(&self) -> &Model<T> {
        &self.model
    }
}

/// Single-writer, multi-reader holder of the latest model. Publishing swaps an
/// `Arc`, so readers never see a partially written model and never block the
/// writer for longer than a pointer copy.
#[derive(Debug)]
pub struct ServingState<T> {
    inner: RwLock<(Arc<Model<T>>, u64)>,
}

impl<T: Real> ServingState<T> {
    pub fn new(initial: Model<T>) -> Self {
        Self {
            inner: RwLock::new((Arc::new(initial), 0)),
        }
    }

    pub fn publish(&self, model: Model<T>) {
        let fresh = Arc::new(model);
        let mut guard = self.inner.write();
        guard.0 = fresh;
        guard.1 += 1;
    }

    pub fn snapshot(&self) -> Snapshot<T> {
        let guard = self.inner.read();
        Snapshot {
            model: Arc::clone(&guard.0),
            generation: guard.1,
        }
    }

    pub fn generation(&self) -> u64 {
        self.inner.read().1
    }
}

pub fn snapshot<T: Real>(serving: &ServingState<T>) -> Snapshot<T> {
    serving.snapshot()
}

/// Element-wise forward passes, order preserved.
pub fn infer<T: Real>(model: &Model<T>, csi: &[AmplitudeWindow<T>]) -> Result<Vec<ImageFrame<T>>> {
    csi.iter().map(|w| model.forward(w)).collect()
}

fn predict_slot<T: Real>(model: &Model<T>, slot: &SlotBatch<T>, ssim: &SsimConfig) -> Result<QualityScore> {
    let predicted = slot
        .pairs
        .iter()
        .map(|p| model.forward(&p.window))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<ImageFrame<T>> = slot.pairs.iter().map(|p| p.frame.clone()).collect();
    score_slot(&predicted, &truth, ssim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClConfig {
    pub threshold: Threshold,
    pub update: TrainConfig,
    pub ssim: SsimConfig,
}

/// Runs the gated loop over `slots` in order. Returns the final model and one
/// report per slot.
pub fn run_cl<T: Real>(
    initial: &Model<T>,
    slots: &[SlotBatch<T>],
    cfg: &ClConfig,
    serving: &ServingState<T>,
) -> Result<(Model<T>, Vec<SlotReport>)> {
    run_cl_observed(initial, slots, cfg, serving, |_, _| {})
}

/// [`run_cl`] with a callback receiving each slot's report and resulting model.
pub fn run_cl_observed<T: Real>(
    initial: &Model<T>,
    slots: &[SlotBatch<T>],
    cfg: &ClConfig,
    serving: &ServingState<T>,
    mut on_slot: impl FnMut(&SlotReport, &Model<T>),
) -> Result<(Model<T>, Vec<SlotReport>)> {
    let mut current = initial.clone();
    let mut reports = Vec::with_capacity(slots.len());
    for (position, slot) in slots.iter().enumerate() {
        let started = Instant::now();
        let mut report = SlotReport {
            slot_index: position,
            score_before: None,
            updated: false,
            epochs_run: 0,
            score_after: None,
            wall_time_s: 0.0,
        };
        if !slot.is_empty() {
            let before = predict_slot(&current, slot, &cfg.ssim)?;
            report.score_before = Some(before);
            if gate(&before, &cfg.threshold) {
                let update = TrainConfig {
                    shuffle_seed: rng::key(&[cfg.update.shuffle_seed, position as u64]),
                    ..cfg.update.clone()
                };
                current = train_epochs(&current, &slot.pairs, &update).map_err(|e| match e {
                    Error::Diverged { epoch, batch, .. } => Error::Diverged {
                        slot: Some(position),
                        epoch,
                        batch,
                    },
                    other => other,
                })?;
                report.updated = true;
                report.epochs_run = update.epochs;
                report.score_after = Some(predict_slot(&current, slot, &cfg.ssim)?);
            }
        }
        report.wall_time_s = started.elapsed().as_secs_f64();
        serving.publish(current.clone());
        on_slot(&report, &current);
        reports.push(report);
    }
    Ok((current, reports))
}

pub const REPORT_HEADER: &str = "slot,ssim_before,psnr_before,updated,epochs,ssim_after,psnr_after,wall_s";

/// Formats a float for report CSVs; infinities become `inf` / `-inf`.
pub fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn write_report_csv<W: Write>(reports: &[SlotReport], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    let pair = |s: &Option<QualityScore>| match s {
        Some(q) => (fmt_value(q.mean_ssim), fmt_value(q.mean_psnr_db)),
        None => (String::new(), String::new()),
    };
    for r in reports {
        let (sb, pb) = pair(&r.score_before);
        let (sa, pa) = pair(&r.score_after);
        writeln!(
            out,
            "{},{sb},{pb},{},{},{sa},{pa},{:.6}",
            r.slot_index, r.updated, r.epochs_run, r.wall_time_s
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(ssim: f64, psnr: f64) -> QualityScore {
        QualityScore {
            mean_ssim: ssim,
            mean_psnr_db: psnr,
            n_pairs: 1,
        }
    }

    #[test]
    fn gate_or_rule() {
        let th = Threshold::default();
        assert!(!gate(&score(0.95, 30.0), &th));
        assert!(gate(&score(0.85, 30.0), &th));
        assert!(gate(&score(0.95, 27.0), &th));
        assert!(!gate(&score(0.9, 28.0), &th));
        assert!(!gate(&score(1.0, f64::INFINITY), &th));
        assert!(gate(&score(1.0, f64::INFINITY), &Threshold::ALWAYS));
        assert!(!gate(&score(-1.0, 0.0), &Threshold::NEVER));
    }

    #[test]
    fn report_csv_format() {
        let reports = vec![
            SlotReport {
                slot_index: 0,
                score_before: Some(score(0.5, f64::INFINITY)),
                updated: true,
                epochs_run: 30,
                score_after: Some(score(0.75, 21.5)),
                wall_time_s: 1.25,
            },
            SlotReport {
                slot_index: 1,
                score_before: None,
                updated: false,
                epochs_run: 0,
                score_after: None,
                wall_time_s: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_report_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "0,0.5,inf,true,30,0.75,21.5,1.250000");
        assert_eq!(lines[2], "1,,,false,0,,,0.000000");
    }
}
