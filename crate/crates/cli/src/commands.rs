use std::fs;
use std::io::Write;
use std::path::Path;

use csi_imager::clloop::{fmt_value, run_cl_observed, write_report_csv, ClConfig, ServingState, SlotReport, Threshold};
use csi_imager::dataset::{encode_ppm, read_dataset, simulate_to_dir};
use csi_imager::ingest::{build_windows, make_slots_spanning, slot_count, AlignedPair, SlotBatch, WindowParams};
use csi_imager::metrics::{score_slot, QualityScore, SsimConfig};
use csi_imager::model::{init_model, load_model, save_model, train_epochs, HyperParams, TrainConfig};
use csi_imager::sim::{build_scenario, CaptureConfig, CaptureMeta};
use csi_imager::{rng, Error as CoreError, ImageFrame, Model};

use crate::args::{EvaluateArgs, PretrainArgs, RunClArgs, SimulateArgs, Split};
use crate::{CliError, Result};

const SHUFFLE_TAG: u64 = 0x5EED;

fn emit(out: &mut dyn Write, line: std::fmt::Arguments) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = build_scenario(&args.scenario, args.seed)?;
    if let Some(d) = args.duration_s {
        spec.duration_s = d;
        spec.validate()?;
    }
    let cfg = CaptureConfig {
        csi_rate_hz: args.csi_hz,
        frame_rate_fps: args.fps,
        resolution: (args.resolution, args.resolution),
    };
    let (meta, records, frames) = simulate_to_dir(&spec, &cfg, &args.out)?;
    emit(
        out,
        format_args!(
            "{}: {records} CSI records from {} sensors, {frames} frames over {} s -> {}",
            meta.scenario,
            meta.n_sensors,
            meta.duration_s,
            args.out.display()
        ),
    )
}

/// Reads a dataset directory and builds its aligned pairs.
pub fn load_pairs(dir: &Path, params: &WindowParams) -> Result<(CaptureMeta, Vec<AlignedPair<f64>>)> {
    let ds = read_dataset(dir)?;
    let windows = build_windows::<f64, f32>(&ds, params)?;
    Ok((ds.meta, windows.pairs))
}

/// Number of leading pairs used for training; the rest (the final 10% by
/// time, rounded up) are validation.
pub fn holdout_split(n_pairs: usize) -> Result<usize> {
    if n_pairs < 2 {
        return Err(CoreError::Ingest(format!("need at least 2 aligned pairs for a holdout split, got {n_pairs}")).into());
    }
    Ok(n_pairs - n_pairs.div_ceil(10))
}

pub fn score_pairs(model: &Model, pairs: &[AlignedPair<f64>]) -> Result<QualityScore> {
    let predicted = pairs
        .iter()
        .map(|p| model.forward(&p.window))
        .collect::<csi_imager::Result<Vec<_>>>()?;
    let truth: Vec<ImageFrame> = pairs.iter().map(|p| p.frame.clone()).collect();
    Ok(score_slot(&predicted, &truth, &SsimConfig::default())?)
}

pub fn format_score(label: &str, s: &QualityScore) -> String {
    format!(
        "{label}: mean_ssim={} mean_psnr_db={} n_pairs={}",
        fmt_value(s.mean_ssim),
        fmt_value(s.mean_psnr_db),
        s.n_pairs
    )
}

fn hyper_from(args: &PretrainArgs, meta: &CaptureMeta) -> Result<HyperParams> {
    let m = &args.model;
    let hyper = HyperParams {
        n_channels: meta.n_sensors,
        n_subcarriers: meta.n_subcarriers,
        window_len: args.ingest.window_len,
        d_model: m.d_model,
        n_heads: m.heads,
        n_layers: m.layers,
        d_ffn: m.d_ffn,
        out_h: args.ingest.image_size,
        out_w: args.ingest.image_size,
        seed_grid: m.seed_grid,
        base_ch: m.base_ch,
        learning_rate: m.lr,
        momentum: m.momentum,
        batch_size: m.batch_size,
    };
    hyper.validate()?;
    Ok(hyper)
}

/// Trains a fresh model and saves it. Returns the validation score of the
/// saved (f32-rounded) parameters.
pub fn pretrain(args: &PretrainArgs, out: &mut dyn Write) -> Result<QualityScore> {
    let params = WindowParams {
        window_len: args.ingest.window_len,
        lowpass_w: args.ingest.lowpass_w,
        image_size: (args.ingest.image_size, args.ingest.image_size),
    };
    let (meta, pairs) = load_pairs(&args.data, &params)?;
    let hyper = hyper_from(args, &meta)?;
    let n_train = holdout_split(pairs.len())?;
    let (train, val) = pairs.split_at(n_train);
    emit(
        out,
        format_args!(
            "pretrain: {} parameters, {} train / {} validation pairs, {} epochs",
            hyper.parameter_count(),
            train.len(),
            val.len(),
            args.epochs
        ),
    )?;

    let model: Model = init_model(&hyper, args.seed)?;
    let cfg = TrainConfig::from_hyper(&hyper, args.epochs, rng::key(&[args.seed, SHUFFLE_TAG]));
    let trained = train_epochs(&model, train, &cfg)?.quantized();
    let score = score_pairs(&trained, val)?;
    save_model(&trained, &args.out)?;
    emit(out, format_args!("{}", format_score("validation", &score)))?;
    Ok(score)
}

pub fn threshold(ssim_th: f64, psnr_th: f64) -> Result<Threshold> {
    if ssim_th.is_nan() || psnr_th.is_nan() {
        return Err(CliError::Config("thresholds must not be NaN".into()));
    }
    Ok(Threshold {
        ssim_min: ssim_th,
        psnr_min_db: psnr_th,
    })
}

/// Slots for every dataset in order, numbered consecutively. Each dataset
/// contributes enough slots to cover its full duration.
pub fn chained_slots(model: &Model, dirs: &[impl AsRef<Path>], slot_s: f64, lowpass_w: usize) -> Result<Vec<SlotBatch<f64>>> {
    let hyper = &model.hyper;
    let params = WindowParams {
        window_len: hyper.window_len,
        lowpass_w,
        image_size: (hyper.out_h, hyper.out_w),
    };
    let mut all = Vec::new();
    for dir in dirs {
        let dir = dir.as_ref();
        let (meta, pairs) = load_pairs(dir, &params)?;
        if meta.n_sensors != hyper.n_channels || meta.n_subcarriers != hyper.n_subcarriers {
            return Err(CoreError::Dimension(format!(
                "{} has {} sensors x {} subcarriers, model expects {} x {}",
                dir.display(),
                meta.n_sensors,
                meta.n_subcarriers,
                hyper.n_channels,
                hyper.n_subcarriers
            ))
            .into());
        }
        let min_slots = slot_count(meta.duration_s, slot_s)?;
        for mut slot in make_slots_spanning(&pairs, slot_s, min_slots)? {
            slot.slot_index = all.len();
            all.push(slot);
        }
    }
    Ok(all)
}

fn dump_slot(dir: &Path, slot: &SlotBatch<f64>, before: &Model, after: &Model, report: &SlotReport) -> Result<()> {
    let Some(pair) = slot.pairs.first() else {
        return Ok(());
    };
    let slot_dir = dir.join(format!("slot_{:04}", slot.slot_index));
    fs::create_dir_all(&slot_dir).map_err(|e| CliError::io(&slot_dir, e))?;
    let mut images = vec![("truth.ppm", pair.frame.clone()), ("before.ppm", before.forward(&pair.window)?)];
    if report.updated {
        images.push(("after.ppm", after.forward(&pair.window)?));
    }
    for (name, img) in images {
        let path = slot_dir.join(name);
        fs::write(&path, encode_ppm(&img)).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

pub fn run_cl(args: &RunClArgs, out: &mut dyn Write) -> Result<Vec<SlotReport>> {
    let th = threshold(args.ssim_th, args.psnr_th)?;
    let model: Model = load_model(&args.model)?;
    let slots = chained_slots(&model, &args.data, args.slot_s, args.lowpass_w)?;
    let cfg = ClConfig {
        threshold: th,
        update: TrainConfig::from_hyper(&model.hyper, args.epochs_per_update, rng::key(&[args.seed, SHUFFLE_TAG])),
        ssim: SsimConfig::default(),
    };
    let serving = ServingState::new(model.clone());

    let mut previous = model.clone();
    let mut side_error: Option<CliError> = None;
    let (final_model, reports) = run_cl_observed(&model, &slots, &cfg, &serving, |report, current| {
        if side_error.is_some() {
            return;
        }
        let mut step = || -> Result<()> {
            if let Some(dir) = &args.dump_frames {
                dump_slot(dir, &slots[report.slot_index], &previous, current, report)?;
            }
            let before = report
                .score_before
                .map(|s| format!("ssim {:.4} psnr {}", s.mean_ssim, fmt_value((s.mean_psnr_db * 100.0).round() / 100.0)))
                .unwrap_or_else(|| "empty".into());
            let after = report
                .score_after
                .map(|s| format!(" -> ssim {:.4}", s.mean_ssim))
                .unwrap_or_default();
            emit(
                out,
                format_args!(
                    "slot {}: {before}{}{after}",
                    report.slot_index,
                    if report.updated { ", updated" } else { "" }
                ),
            )
        };
        if let Err(e) = step() {
            side_error = Some(e);
        }
        previous = current.clone();
    })?;
    if let Some(e) = side_error {
        return Err(e);
    }

    if let Some(parent) = args.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let file = fs::File::create(&args.report).map_err(|e| CliError::io(&args.report, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_report_csv(&reports, &mut w)?;
    w.flush().map_err(|e| CliError::io(&args.report, e))?;
    if let Some(path) = &args.out_model {
        save_model(&final_model, path)?;
    }
    let updates = reports.iter().filter(|r| r.updated).count();
    emit(out, format_args!("run-cl: {} slots, {updates} updates", reports.len()))?;
    Ok(reports)
}

pub fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<QualityScore> {
    let model: Model = load_model(&args.model)?;
    let hyper = &model.hyper;
    let params = WindowParams {
        window_len: hyper.window_len,
        lowpass_w: args.lowpass_w,
        image_size: (hyper.out_h, hyper.out_w),
    };
    let (_, pairs) = load_pairs(&args.data, &params)?;
    let selected = match args.split {
        Split::All => &pairs[..],
        Split::Train => &pairs[..holdout_split(pairs.len())?],
        Split::Val => &pairs[holdout_split(pairs.len())?..],
    };
    let score = score_pairs(&model, selected)?;
    let split = format!("{:?}", args.split).to_lowercase();
    emit(out, format_args!("{}", format_score(&split, &score)))?;
    emit(out, format_args!("split,mean_ssim,mean_psnr_db,n_pairs"))?;
    emit(
        out,
        format_args!("{split},{},{},{}", fmt_value(score.mean_ssim), fmt_value(score.mean_psnr_db), score.n_pairs),
    )?;
    Ok(score)
}
