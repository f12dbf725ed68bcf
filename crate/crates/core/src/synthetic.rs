//! Deterministic synthetic signals used as fixtures by tests and benchmarks.

use rand::Rng;

use crate::fields::GridField;
use crate::rng::seeded;

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Smooth RGB test image in `[0, 1]`: coloured blobs over low-frequency
/// waves, plus a disk with a soft edge a couple of pixels wide.
pub fn smooth_image(res: usize, seed: u64) -> GridField {
    let mut rng = seeded(seed, 0);
    let blobs: Vec<([f64; 2], f64, [f64; 3])> = (0..6)
        .map(|_| {
            (
                [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)],
                rng.random_range(0.06..0.18),
                [rng.random(), rng.random(), rng.random()],
            )
        })
        .collect();
    let waves: Vec<([f64; 2], f64)> = (0..3)
        .map(|_| {
            (
                [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)],
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let disk = (
        [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)],
        rng.random_range(0.12..0.2),
        [
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        ],
    );
    let edge = 2.0 / res as f64;
    GridField::from_fn(vec![res, res], 3, |x, o| {
        for (c, v) in o.iter_mut().enumerate() {
            let mut s = 0.25;
            for (k, (freq, phase)) in waves.iter().enumerate() {
                s += 0.08 * ((freq[0] * x[0] + freq[1] * x[1]) + phase + c as f64 * k as f64).sin();
            }
            for (p, r, col) in &blobs {
                let d2 = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
                s += 0.35 * col[c] * (-0.5 * d2 / (r * r)).exp();
            }
            let d = ((x[0] - disk.0[0]).powi(2) + (x[1] - disk.0[1]).powi(2)).sqrt();
            let inside = 1.0 - smoothstep(disk.1 - edge, disk.1 + edge, d);
            s = s * (1.0 - 0.5 * inside) + 0.5 * inside * disk.2[c];
            *v = s.clamp(0.0, 1.0);
        }
    })
    .expect("finite synthetic values")
}

/// Independent uniform pixel values in `[0, 1)`.
pub fn random_image(res: usize, channels: usize, seed: u64) -> GridField {
    let mut rng = seeded(seed, 0);
    let values = (0..res * res * channels).map(|_| rng.random()).collect();
    GridField::new(vec![res, res], channels, values).expect("finite random values")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic_and_bounded() {
        let a = smooth_image(32, 4);
        assert_eq!(a, smooth_image(32, 4));
        assert_ne!(a, smooth_image(32, 5));
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let r = random_image(8, 3, 1);
        assert_eq!(r.values().len(), 192);
    }
}
