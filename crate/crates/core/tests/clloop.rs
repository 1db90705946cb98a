use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use csi_imager::clloop::*;
use csi_imager::image::ImageFrame;
use csi_imager::ingest::{AlignedPair, AmplitudeWindow, SlotBatch};
use csi_imager::metrics::SsimConfig;
use csi_imager::model::{init_model, HyperParams, Model, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_hyper() -> HyperParams {
    HyperParams {
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
        learning_rate: 0.05,
        momentum: 0.9,
        batch_size: 4,
    }
}

fn slots(h: &HyperParams, sizes: &[usize], seed: u64) -> Vec<SlotBatch<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sizes
        .iter()
        .enumerate()
        .map(|(slot_index, &n)| SlotBatch {
            slot_index,
            pairs: (0..n)
                .map(|_| {
                    let w = (0..h.n_channels * h.n_subcarriers * h.window_len).map(|_| rng.gen::<f64>()).collect();
                    let level: f64 = rng.gen();
                    AlignedPair {
                        window: AmplitudeWindow::from_vec(h.n_channels, h.n_subcarriers, h.window_len, w, 0),
                        frame: ImageFrame::filled(h.out_h, h.out_w, [level, 0.5, 1.0 - level], 0),
                        time_gap_ns: 0,
                    }
                })
                .collect(),
        })
        .collect()
}

fn config(th: Threshold, epochs: usize) -> ClConfig {
    let h = tiny_hyper();
    ClConfig {
        threshold: th,
        update: TrainConfig::from_hyper(&h, epochs, 77),
        ssim: SsimConfig::default(),
    }
}

fn model() -> Model<f64> {
    init_model(&tiny_hyper(), 3).unwrap()
}

fn param_hash(m: &Model<f64>) -> u64 {
    let mut s = DefaultHasher::new();
    for p in &m.params {
        p.to_bits().hash(&mut s);
    }
    s.finish()
}

#[test]
fn never_threshold_keeps_model_bit_identical() {
    let m = model();
    let data = slots(&m.hyper, &[4, 0, 3, 5], 1);
    let serving = ServingState::new(m.clone());
    let (out, reports) = run_cl(&m, &data, &config(Threshold::NEVER, 3), &serving).unwrap();
    assert_eq!(out.params, m.params);
    assert_eq!(out.version, m.version);
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| !r.updated && r.epochs_run == 0 && r.score_after.is_none()));
    assert!(reports[1].score_before.is_none());
    assert!(reports[0].score_before.is_some());
    assert_eq!(serving.generation(), 4);
}

#[test]
fn always_threshold_updates_every_nonempty_slot() {
    let m = model();
    let data = slots(&m.hyper, &[4, 0, 3, 5], 2);
    let serving = ServingState::new(m.clone());
    let (out, reports) = run_cl(&m, &data, &config(Threshold::ALWAYS, 2), &serving).unwrap();
    let updated: Vec<bool> = reports.iter().map(|r| r.updated).collect();
    assert_eq!(updated, [true, false, true, true]);
    assert_eq!(out.version, m.version + 3);
    for r in reports.iter().filter(|r| r.updated) {
        assert_eq!(r.epochs_run, 2);
        assert!(r.score_after.is_some());
    }
}

#[test]
fn default_threshold_updates_exactly_where_gate_fails() {
    let m = model();
    let data = slots(&m.hyper, &[6, 6, 0, 6, 6, 6], 3);
    // Thresholds placed so some slots pass and some fail.
    for th in [Threshold::default(), Threshold { ssim_min: 0.3, psnr_min_db: 5.0 }] {
        let serving = ServingState::new(m.clone());
        let (_, reports) = run_cl(&m, &data, &config(th, 4), &serving).unwrap();
        assert_eq!(reports.len(), data.len());
        for (i, r) in reports.iter().enumerate() {
            assert_eq!(r.slot_index, i);
            let expected = r.score_before.as_ref().is_some_and(|s| gate(s, &th));
            assert_eq!(r.updated, expected, "slot {i}");
        }
    }
}

#[test]
fn each_slot_starts_from_previous_model() {
    let m = model();
    let data = slots(&m.hyper, &[5, 5, 5], 4);
    let cfg = config(Threshold::ALWAYS, 2);
    let serving = ServingState::new(m.clone());
    let mut seen = Vec::new();
    let (out, _) = run_cl_observed(&m, &data, &cfg, &serving, |_, model| seen.push(model.clone())).unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(out.params, seen[2].params);
    assert_eq!(seen.iter().map(|s| s.version).collect::<Vec<_>>(), [1, 2, 3]);

    // Running only the first slot reproduces the first link of the lineage.
    let (first, _) = run_cl(&m, &data[..1], &cfg, &ServingState::new(m.clone())).unwrap();
    assert_eq!(first.params, seen[0].params);
    // Continuing from it with slots 1 and 2 needs their loop positions, so
    // check instead that every link moved the parameters.
    assert_ne!(seen[0].params, m.params);
    assert_ne!(seen[1].params, seen[0].params);
    assert_ne!(seen[2].params, seen[1].params);
}

#[test]
fn replay_is_deterministic() {
    let m = model();
    let data = slots(&m.hyper, &[5, 3, 0, 4], 5);
    let cfg = config(Threshold::default(), 3);
    let run = || {
        let serving = ServingState::new(m.clone());
        let (out, reports) = run_cl(&m, &data, &cfg, &serving).unwrap();
        let mut csv = Vec::new();
        write_report_csv(&reports, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let stripped: Vec<String> = text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect();
        (param_hash(&out), stripped)
    };
    assert_eq!(run(), run());
}

#[test]
fn snapshots_are_isolated_from_later_publishes() {
    let m = model();
    let serving = ServingState::new(m.clone());
    let snap = serving.snapshot();
    let before = param_hash(&snap);
    assert_eq!(snap.generation, 0);

    let data = slots(&m.hyper, &[5, 5], 6);
    let (out, _) = run_cl(&m, &data, &config(Threshold::ALWAYS, 2), &serving).unwrap();
    assert_eq!(param_hash(&snap), before);
    assert_eq!(snap.generation, 0);

    let latest = snapshot(&serving);
    assert_eq!(latest.generation, 2);
    assert_eq!(latest.params, out.params);
}

#[test]
fn concurrent_readers_see_whole_models() {
    let m = model();
    let serving = ServingState::new(m.clone());
    let data = slots(&m.hyper, &[4, 4, 4], 7);
    let valid: Vec<u64> = {
        let mut v = vec![param_hash(&m)];
        let shadow = ServingState::new(m.clone());
        run_cl_observed(&m, &data, &config(Threshold::ALWAYS, 1), &shadow, |_, model| v.push(param_hash(model))).unwrap();
        v
    };
    std::thread::scope(|s| {
        let reader = s.spawn(|| {
            let mut hashes = Vec::new();
            for _ in 0..200 {
                let snap = serving.snapshot();
                hashes.push((snap.generation, param_hash(&snap)));
            }
            hashes
        });
        run_cl(&m, &data, &config(Threshold::ALWAYS, 1), &serving).unwrap();
        for (generation, hash) in reader.join().unwrap() {
            assert_eq!(hash, valid[generation as usize]);
        }
    });
}

#[test]
fn batch_inference_equals_single_calls() {
    let m = model();
    let data = slots(&m.hyper, &[6], 8);
    let windows: Vec<_> = data[0].pairs.iter().map(|p| p.window.clone()).collect();
    let batch = infer(&m, &windows).unwrap();
    for (w, img) in windows.iter().zip(&batch) {
        assert_eq!(m.forward(w).unwrap().data(), img.data());
    }
    assert!(infer(&m, &[]).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gate_is_or_of_strict_comparisons(s in -1.0f64..1.0, p in 0.0f64..60.0, ts in -1.0f64..1.0, tp in 0.0f64..60.0) {
        let score = csi_imager::metrics::QualityScore { mean_ssim: s, mean_psnr_db: p, n_pairs: 1 };
        let th = Threshold { ssim_min: ts, psnr_min_db: tp };
        prop_assert_eq!(gate(&score, &th), s < ts || p < tp);
        prop_assert!(!gate(&score, &Threshold::NEVER));
        prop_assert!(gate(&score, &Threshold::ALWAYS));
    }
}
