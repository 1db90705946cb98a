//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use csi_imager::image::ImageFrame;
use csi_imager::ingest::{align, AlignedPair, AmplitudeWindow, DEFAULT_WINDOW_LEN};
use csi_imager::metrics::{psnr, ssim, SsimConfig};
use csi_imager::model::{init_model, loss_and_gradients, HyperParams, Model, TensorKind};
use csi_imager::sim::{build_scenario, CaptureConfig, CaptureSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!("{} criterion {id} ({name}): {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csi-imager"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn csi-imager");
    assert!(
        out.status.success(),
        "csi-imager {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

// ---------------------------------------------------------------------------
// 1. Metric oracles

fn naive_ssim(a: &ImageFrame<f64>, b: &ImageFrame<f64>) -> f64 {
    let (k, c1, c2) = (7usize, 1e-4, 9e-4);
    let (h, w) = a.dims();
    let n = (k * k) as f64;
    let (mut total, mut count) = (0.0, 0);
    for c in 0..3 {
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let cells: Vec<(f64, f64)> = (y0..y0 + k)
                    .flat_map(|y| (x0..x0 + k).map(move |x| (y, x)))
                    .map(|(y, x)| (a.get(y, x, c), b.get(y, x, c)))
                    .collect();
                let ma = cells.iter().map(|v| v.0).sum::<f64>() / n;
                let mb = cells.iter().map(|v| v.1).sum::<f64>() / n;
                let va = cells.iter().map(|v| (v.0 - ma).powi(2)).sum::<f64>() / n;
                let vb = cells.iter().map(|v| (v.1 - mb).powi(2)).sum::<f64>() / n;
                let cov = cells.iter().map(|v| (v.0 - ma) * (v.1 - mb)).sum::<f64>() / n;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

fn naive_psnr(a: &ImageFrame<f64>, b: &ImageFrame<f64>) -> f64 {
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn random_image(rng: &mut ChaCha8Rng) -> ImageFrame<f64> {
    ImageFrame::from_vec(16, 16, (0..16 * 16 * 3).map(|_| rng.gen()).collect(), 0)
}

#[test]
fn criterion_1_metric_oracles() {
    let start = Instant::now();
    let cfg = SsimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let a = random_image(&mut rng);
        let b = if i % 2 == 0 {
            random_image(&mut rng)
        } else {
            let d = a.data().iter().map(|&v| (v + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0)).collect();
            ImageFrame::from_vec(16, 16, d, 0)
        };
        worst = worst.max((ssim(&a, &b, &cfg).unwrap() - naive_ssim(&a, &b)).abs());
        worst = worst.max((psnr(&a, &b).unwrap() - naive_psnr(&a, &b)).abs());
    }
    let a = random_image(&mut rng);
    let identical = ssim(&a, &a, &cfg).unwrap() == 1.0 && psnr(&a, &a).unwrap() == f64::INFINITY;
    let base = ImageFrame::from_vec(16, 16, a.data().iter().map(|v| v * 0.5).collect(), 0);
    let shifted = ImageFrame::from_vec(16, 16, base.data().iter().map(|v| v + 0.1).collect(), 0);
    let db = psnr(&base, &shifted).unwrap();
    let elapsed = start.elapsed();
    verdict(
        1,
        "metric oracles",
        worst <= 1e-9 && identical && (db - 20.0).abs() <= 1e-9 && elapsed < Duration::from_secs(10),
        &format!("max |diff| {worst:.2e}, identical={identical}, offset 0.1 -> {db:.12} dB, {:.2}s", elapsed.as_secs_f64()),
    );
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness

#[test]
fn criterion_2_gradient_check() {
    let start = Instant::now();
    let h = HyperParams {
        n_channels: 2,
        n_subcarriers: 3,
        window_len: 5,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ffn: 16,
        out_h: 8,
        out_w: 8,
        seed_grid: 2,
        base_ch: 4,
        learning_rate: 1e-3,
        momentum: 0.9,
        batch_size: 4,
    };
    let mut model: Model<f64> = init_model(&h, 99).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for t in model.layout().tensors.clone() {
        if !matches!(t.kind, TensorKind::Weight { .. }) {
            for v in &mut model.params[t.range] {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
    }
    let batch: Vec<AlignedPair<f64>> = (0..3)
        .map(|_| AlignedPair {
            window: AmplitudeWindow::from_vec(2, 3, 5, (0..30).map(|_| rng.gen_range(0.0..2.0)).collect(), 0),
            frame: ImageFrame::from_vec(8, 8, (0..192).map(|_| rng.gen()).collect(), 0),
            time_gap_ns: 0,
        })
        .collect();
    let (_, grad) = loss_and_gradients(&model, &batch).unwrap();
    let eps = 1e-5;
    let n_probe = 64;
    let mut worst: f64 = 0.0;
    for _ in 0..n_probe {
        let i = rng.gen_range(0..model.params.len());
        let mut plus = model.params.clone();
        plus[i] += eps;
        let mut minus = model.params.clone();
        minus[i] -= eps;
        let lp = loss_and_gradients(&Model::from_params(h.clone(), plus).unwrap(), &batch).unwrap().0;
        let lm = loss_and_gradients(&Model::from_params(h.clone(), minus).unwrap(), &batch).unwrap().0;
        let fd = (lp - lm) / (2.0 * eps);
        let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        "gradient correctness",
        worst <= 1e-4 && elapsed < Duration::from_secs(60),
        &format!("{n_probe} coordinates, worst relative error {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    );
}

// ---------------------------------------------------------------------------
// 3. Alignment oracle

#[test]
fn criterion_3_alignment_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut midpoints = 0;
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut csi: Vec<u64> = (0..rng.gen_range(1..120)).map(|_| rng.gen_range(0..50_000)).collect();
        csi.sort_unstable();
        csi.dedup();
        let mut frames: Vec<u64> = (0..rng.gen_range(1..60)).map(|_| rng.gen_range(0..51_000)).collect();
        for w in csi.windows(2) {
            if (w[1] - w[0]) % 2 == 0 && rng.gen_bool(0.5) {
                frames.push((w[0] + w[1]) / 2);
                midpoints += 1;
            }
        }
        frames.sort_unstable();
        frames.dedup();
        let got = align(&frames, &csi, None).unwrap();
        let expected: Vec<(usize, usize)> = frames
            .iter()
            .enumerate()
            .map(|(fi, &t)| {
                let mut best = 0;
                for (ci, &c) in csi.iter().enumerate() {
                    if c.abs_diff(t) < csi[best].abs_diff(t) {
                        best = ci;
                    }
                }
                (fi, best)
            })
            .collect();
        mismatches += usize::from(got.pairs != expected);
    }
    let elapsed = start.elapsed();
    verdict(
        3,
        "alignment oracle",
        mismatches == 0 && midpoints > 0 && elapsed < Duration::from_secs(5),
        &format!("1000 sets, {midpoints} exact midpoints, {mismatches} mismatches, {:.2}s", elapsed.as_secs_f64()),
    );
}

// ---------------------------------------------------------------------------
// 4. Rates and counts

#[test]
fn criterion_4_rates_and_counts() {
    let spec = build_scenario("office", 1).unwrap();
    let cfg = CaptureConfig::default();
    let schedule = CaptureSchedule::new(&spec, &cfg);
    let frames = schedule.frame_timestamps_ns.len();
    let per_second_ok = schedule
        .csi_timestamps_ns
        .chunk_by(|a, b| a / 1_000_000_000 == b / 1_000_000_000)
        .all(|sec| sec.len() == 500);
    let seconds = schedule.csi_timestamps_ns.len() / 500;
    let frame_interval_ns = (1e9 / cfg.frame_rate_fps).round() as u64;
    let csi_interval_ns = (1e9 / cfg.csi_rate_hz).round() as u64;
    let tiles = DEFAULT_WINDOW_LEN as u64 * csi_interval_ns == frame_interval_ns;

    // Generated files agree with the schedule: 2 s of s1 is 20 frames.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s1");
    run_ok(&["simulate", "--scenario", "s1", "--seed", "1", "--duration-s", "2", "--out", p(&out)]);
    let csv_rows = fs::read_to_string(out.join("frames.csv")).unwrap().lines().count() - 1;
    let ds = csi_imager::dataset::read_dataset(&out).unwrap();
    let per_sensor = ds.csi_records.iter().filter(|r| r.sensor_id == 0).count();

    verdict(
        4,
        "rates and counts",
        frames == 18_000 && per_second_ok && seconds == 1800 && tiles && csv_rows == 20 && per_sensor == 1000,
        &format!(
            "office: {frames} frames, 500 CSI/sensor/s over {seconds} s = {per_second_ok}, \
             window 50 x {csi_interval_ns} ns = frame interval {frame_interval_ns} ns: {tiles}; \
             2 s s1 capture: {csv_rows} frames, {per_sensor} records/sensor"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Gated-update semantics

const TINY_MODEL: &[&str] = &[
    "--window-len", "10", "--image-size", "8", "--d-model", "8", "--heads", "2", "--layers", "1", "--d-ffn", "16",
    "--seed-grid", "2", "--base-ch", "4", "--batch-size", "8",
];

struct Report {
    rows: Vec<Vec<String>>,
}

impl Report {
    fn read(path: &Path) -> Self {
        let text = fs::read_to_string(path).unwrap();
        let rows = text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
        Report { rows }
    }

    fn updated(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r[3] == "true").collect()
    }

    fn before(&self) -> Vec<Option<(f64, f64)>> {
        self.rows
            .iter()
            .map(|r| (!r[1].is_empty()).then(|| (r[1].parse().unwrap(), r[2].parse().unwrap())))
            .collect()
    }
}

fn tiny_setup(dir: &Path) -> (PathBuf, Vec<PathBuf>) {
    let office = dir.join("office");
    run_ok(&["simulate", "--scenario", "office", "--seed", "3", "--duration-s", "3", "--resolution", "16", "--out", p(&office)]);
    let model = dir.join("tiny.model");
    let mut args = vec!["pretrain", "--data", p(&office), "--out", p(&model), "--epochs", "3", "--seed", "3"];
    args.extend_from_slice(TINY_MODEL);
    run_ok(&args);
    let mut data = Vec::new();
    for (name, dur) in [("s1", "3"), ("s4", "2.5")] {
        let d = dir.join(name);
        run_ok(&["simulate", "--scenario", name, "--seed", "3", "--duration-s", dur, "--resolution", "16", "--out", p(&d)]);
        data.push(d);
    }
    (model, data)
}

fn run_cl(model: &Path, data: &[PathBuf], report: &Path, out_model: &Path, extra: &[&str]) -> Report {
    let mut args = vec!["run-cl", "--model", p(model), "--report", p(report), "--out-model", p(out_model), "--slot-s", "0.5", "--epochs-per-update", "3"];
    for d in data {
        args.extend(["--data", p(d)]);
    }
    args.extend_from_slice(extra);
    run_ok(&args);
    Report::read(report)
}

#[test]
fn criterion_5_gated_update_semantics() {
    let dir = tempfile::tempdir().unwrap();
    let (model, data) = tiny_setup(dir.path());
    // 3 s + 2.5 s at 0.5 s slots.
    let expected_rows = 6 + 5;

    let never = run_cl(&model, &data, &dir.path().join("never.csv"), &dir.path().join("never.model"), &["--ssim-th", "-inf", "--psnr-th", "-inf"]);
    let never_ok = never.rows.len() == expected_rows
        && never.updated().iter().all(|u| !u)
        && fs::read(&model).unwrap() == fs::read(dir.path().join("never.model")).unwrap();

    let always = run_cl(&model, &data, &dir.path().join("always.csv"), &dir.path().join("always.model"), &["--ssim-th", "inf", "--psnr-th", "inf"]);
    let always_ok = always.rows.len() == expected_rows
        && always.updated().iter().zip(always.before()).all(|(u, b)| *u == b.is_some());

    let gate_matches = |r: &Report, ssim_th: f64, psnr_th: f64| {
        r.updated()
            .iter()
            .zip(r.before())
            .all(|(u, b)| *u == b.is_some_and(|(s, db)| s < ssim_th || db < psnr_th))
    };
    let default = run_cl(&model, &data, &dir.path().join("default.csv"), &dir.path().join("default.model"), &[]);
    let default_ok = default.rows.len() == expected_rows && gate_matches(&default, 0.9, 28.0);

    // A threshold in the middle of the observed scores gives a mix of both outcomes.
    let mut scores: Vec<f64> = never.before().into_iter().flatten().map(|b| b.0).collect();
    scores.sort_by(f64::total_cmp);
    let mid = scores[scores.len() / 2];
    let mid_arg = mid.to_string();
    let mixed = run_cl(&model, &data, &dir.path().join("mixed.csv"), &dir.path().join("mixed.model"), &["--ssim-th", &mid_arg, "--psnr-th", "-inf"]);
    let mixed_ok = mixed.rows.len() == expected_rows && gate_matches(&mixed, mid, f64::NEG_INFINITY);
    let n_mixed = mixed.updated().iter().filter(|u| **u).count();

    verdict(
        5,
        "gated-update semantics",
        never_ok && always_ok && default_ok && mixed_ok,
        &format!(
            "{expected_rows} rows each; (-inf,-inf) no updates + identical model: {never_ok}; \
             (inf,inf) every non-empty slot: {always_ok}; (0.9, 28 dB) matches gate: {default_ok}; \
             mid threshold {mid:.4} matches gate with {n_mixed} updates: {mixed_ok}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Domain-shift adaptation

fn score_field(text: &str, key: &str) -> f64 {
    let start = text.find(&format!("{key}=")).unwrap() + key.len() + 1;
    let rest = &text[start..];
    rest[..rest.find(char::is_whitespace).unwrap_or(rest.len())].parse().unwrap()
}

#[test]
fn criterion_6_domain_shift_adaptation() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let office = dir.path().join("office");
    let s1 = dir.path().join("s1");
    let model = dir.path().join("office.model");
    let report = dir.path().join("cl.csv");
    run_ok(&["simulate", "--scenario", "office", "--seed", "1", "--duration-s", "120", "--out", p(&office)]);
    run_ok(&["simulate", "--scenario", "s1", "--seed", "1", "--duration-s", "60", "--out", p(&s1)]);
    let pre = run_ok(&["pretrain", "--data", p(&office), "--out", p(&model), "--epochs", "50", "--seed", "1"]);
    let office_val = score_field(&pre, "mean_ssim");

    run_ok(&["run-cl", "--model", p(&model), "--data", p(&s1), "--slot-s", "10", "--epochs-per-update", "30", "--report", p(&report)]);
    let r = Report::read(&report);
    let before = r.before();
    let slot0 = before[0].unwrap().0;
    let last = before.last().unwrap().unwrap().0;
    let updates = r.updated().iter().filter(|u| **u).count();
    let elapsed = start.elapsed();

    let drop = office_val - slot0;
    let gap = office_val - last;
    verdict(
        6,
        "domain-shift adaptation",
        office_val >= 0.7
            && drop >= 0.05
            && r.rows.len() >= 5
            && updates >= 1
            && gap <= 0.05
            && elapsed <= Duration::from_secs(15 * 60),
        &format!(
            "office validation SSIM {office_val:.4}; industrial slot 0 {slot0:.4} (drop {drop:.4}); \
             final slot {last:.4} (gap {gap:.4}) after {updates} updates over {} slots; {:.0}s",
            r.rows.len(),
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. End-to-end determinism

fn digest_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, Sha256::digest(fs::read(&path).unwrap()).to_vec()));
            }
        }
    }
    out.sort();
    out
}

fn without_wall(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn criterion_7_end_to_end_determinism() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let (model, data) = tiny_setup(dir.path());
            let report = dir.path().join("r.csv");
            let final_model = dir.path().join("final.model");
            run_cl(&model, &data, &report, &final_model, &[]);
            let datasets: Vec<_> = std::iter::once(dir.path().join("office")).chain(data).map(|d| digest_tree(&d)).collect();
            (
                datasets,
                fs::read(&model).unwrap(),
                fs::read(&final_model).unwrap(),
                without_wall(&fs::read_to_string(&report).unwrap()),
            )
        })
        .collect();
    let data_ok = runs[0].0 == runs[1].0;
    let model_ok = runs[0].1 == runs[1].1 && runs[0].2 == runs[1].2;
    let report_ok = runs[0].3 == runs[1].3;
    verdict(
        7,
        "end-to-end determinism",
        data_ok && model_ok && report_ok,
        &format!("datasets identical: {data_ok}; model files identical: {model_ok}; reports identical (wall excluded): {report_ok}"),
    );
}
