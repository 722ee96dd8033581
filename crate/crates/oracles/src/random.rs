//! Seeded random instances shared by the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{Det, Gt};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to 5 ground truths and 5 detections per class and image. Detections are
/// jittered copies of ground truths or free boxes; scores come from a coarse
/// grid so ties occur.
pub fn eval_instance(rng: &mut ChaCha8Rng, images: usize, classes: usize) -> (Vec<Det>, Vec<Gt>) {
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for image in 0..images {
        for class in 0..classes {
            let n_gt = rng.gen_range(0..=5);
            let n_det = rng.gen_range(0..=5);
            let mut local = Vec::new();
            for _ in 0..n_gt {
                let b = [rng.gen_range(5.0..45.0), rng.gen_range(5.0..45.0), rng.gen_range(4.0..12.0), rng.gen_range(4.0..12.0)];
                local.push(b);
                gts.push(Gt { image, class, bbox: b });
            }
            for _ in 0..n_det {
                let bbox = if !local.is_empty() && rng.gen_bool(0.7) {
                    let g = local[rng.gen_range(0..local.len())];
                    let j = rng.gen_range(0.0..3.0);
                    [
                        g[0] + rng.gen_range(-j..=j),
                        g[1] + rng.gen_range(-j..=j),
                        g[2] * rng.gen_range(0.7..1.3),
                        g[3] * rng.gen_range(0.7..1.3),
                    ]
                } else {
                    [rng.gen_range(5.0..45.0), rng.gen_range(5.0..45.0), rng.gen_range(4.0..12.0), rng.gen_range(4.0..12.0)]
                };
                let score = rng.gen_range(1..=10) as f64 / 10.0;
                dets.push(Det { image, class, score, bbox });
            }
        }
    }
    (dets, gts)
}

/// Normalized histogram with roughly a quarter of the bins empty.
pub fn histogram(rng: &mut ChaCha8Rng, bins: usize) -> Vec<f64> {
    let mut counts: Vec<f64> = (0..bins)
        .map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(1..1000) as f64 })
        .collect();
    if counts.iter().all(|&c| c == 0.0) {
        counts[0] = 1.0;
    }
    crate::js::normalize(&counts)
}

/// `n` values uniform in `[-1, 1)`.
pub fn values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}
