use csi_imager::metrics::*;
use csi_imager::image::ImageFrame;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_ssim(a: &ImageFrame<f64>, b: &ImageFrame<f64>, k: usize, c1: f64, c2: f64) -> f64 {
    let (h, w) = a.dims();
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..3 {
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let (mut ma, mut mb) = (0.0, 0.0);
                for y in y0..y0 + k {
                    for x in x0..x0 + k {
                        ma += a.get(y, x, c);
                        mb += b.get(y, x, c);
                    }
                }
                ma /= n;
                mb /= n;
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for y in y0..y0 + k {
                    for x in x0..x0 + k {
                        let da = a.get(y, x, c) - ma;
                        let db = b.get(y, x, c) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                }
                va /= n;
                vb /= n;
                cov /= n;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

fn naive_psnr(a: &ImageFrame<f64>, b: &ImageFrame<f64>) -> f64 {
    let n = a.data().len() as f64;
    let mse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> ImageFrame<f64> {
    ImageFrame::from_vec(h, w, (0..h * w * 3).map(|_| rng.gen::<f64>()).collect(), 0)
}

fn random_pair(rng: &mut ChaCha8Rng) -> (ImageFrame<f64>, ImageFrame<f64>) {
    let a = random_image(rng, 16, 16);
    let b = match rng.gen_range(0..3) {
        0 => random_image(rng, 16, 16),
        // Correlated: a plus small noise, clipped.
        1 => {
            let data = a.data().iter().map(|&v| (v + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0)).collect();
            ImageFrame::from_vec(16, 16, data, 0)
        }
        _ => {
            let data = a.data().iter().map(|&v| 1.0 - v).collect();
            ImageFrame::from_vec(16, 16, data, 0)
        }
    };
    (a, b)
}

#[test]
fn ssim_and_psnr_match_naive_reference() {
    let cfg = SsimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let (a, b) = random_pair(&mut rng);
        let s = ssim(&a, &b, &cfg).unwrap();
        let r = naive_ssim(&a, &b, 7, 1e-4, 9e-4);
        assert!((s - r).abs() <= 1e-9, "ssim {s} vs {r}");
        let p = psnr(&a, &b).unwrap();
        let q = naive_psnr(&a, &b);
        assert!((p - q).abs() <= 1e-9, "psnr {p} vs {q}");
    }
}

#[test]
fn closed_form_cases() {
    let cfg = SsimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_image(&mut rng, 16, 16);
    assert_eq!(ssim(&a, &a, &cfg).unwrap(), 1.0);
    assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);

    let base = ImageFrame::from_vec(16, 16, a.data().iter().map(|v| v * 0.8).collect(), 0);
    let shifted = ImageFrame::from_vec(16, 16, base.data().iter().map(|v| v + 0.1).collect(), 0);
    assert!((psnr(&base, &shifted).unwrap() - 20.0).abs() < 1e-9);
}

#[test]
fn psnr_decreases_as_noise_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_image(&mut rng, 16, 16);
    let noise: Vec<f64> = (0..a.data().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut last = f64::INFINITY;
    for level in [0.01, 0.02, 0.05, 0.1, 0.2, 0.4] {
        let data = a.data().iter().zip(&noise).map(|(v, n)| v + level * n).collect();
        let p = psnr(&a, &ImageFrame::from_vec(16, 16, data, 0)).unwrap();
        assert!(p < last);
        last = p;
    }
}

#[test]
fn slot_score_is_mean_of_pairs() {
    let cfg = SsimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pairs: Vec<_> = (0..6).map(|_| random_pair(&mut rng)).collect();
    let (pred, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let score = score_slot(&pred, &truth, &cfg).unwrap();
    let ms = pred.iter().zip(&truth).map(|(a, b)| ssim(a, b, &cfg).unwrap()).sum::<f64>() / 6.0;
    let mp = pred.iter().zip(&truth).map(|(a, b)| psnr(a, b).unwrap()).sum::<f64>() / 6.0;
    assert_eq!(score.n_pairs, 6);
    assert!((score.mean_ssim - ms).abs() < 1e-12);
    assert!((score.mean_psnr_db - mp).abs() < 1e-12);
    assert!(score_slot(&pred[..2], &truth, &cfg).is_err());
}

#[test]
fn mismatched_dimensions_error() {
    let a = ImageFrame::<f64>::filled(16, 16, [0.0; 3], 0);
    let b = ImageFrame::<f64>::filled(16, 17, [0.0; 3], 0);
    assert!(ssim(&a, &b, &SsimConfig::default()).is_err());
    assert!(psnr(&a, &b).is_err());
    let bad = SsimConfig { window: 4, ..SsimConfig::default() };
    assert!(ssim(&a, &a, &bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ssim_is_bounded_and_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = random_pair(&mut rng);
        let cfg = SsimConfig::default();
        let s = ssim(&a, &b, &cfg).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert!((s - ssim(&b, &a, &cfg).unwrap()).abs() < 1e-12);
        prop_assert!(psnr(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn slot_score_ignores_pair_order(seed in any::<u64>(), rot in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut p, mut t): (Vec<_>, Vec<_>) = (0..5).map(|_| random_pair(&mut rng)).unzip();
        let cfg = SsimConfig::default();
        let s1 = score_slot(&p, &t, &cfg).unwrap();
        p.rotate_left(rot);
        t.rotate_left(rot);
        let s2 = score_slot(&p, &t, &cfg).unwrap();
        prop_assert!((s1.mean_ssim - s2.mean_ssim).abs() < 1e-12);
        prop_assert!((s1.mean_psnr_db - s2.mean_psnr_db).abs() < 1e-12);
    }
}
