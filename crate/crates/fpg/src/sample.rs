//! Deterministic sampling of evaluation points on the slit tangent bundle.
//!
//! Base coordinates are drawn uniformly from a box; fiber coordinates are a
//! uniform direction scaled by a log-uniform radius, so both small and large
//! tangent vectors are exercised. All sampling is seeded and reproducible.

use crate::jet::EvalPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded random generator used across the crate for reproducible runs.
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.gen_range(lo..hi)
    }
}

/// Sampling region: a box for `x` and a radial annulus for `y`.
#[derive(Clone, Debug)]
pub struct Domain {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub y_rmin: f64,
    pub y_rmax: f64,
}

impl Domain {
    /// The default region: x in [-0.5, 0.5]^n, |y| log-uniform in [0.1, 10].
    pub fn default_box(n: usize) -> Domain {
        Domain {
            x_lo: vec![-0.5; n],
            x_hi: vec![0.5; n],
            y_rmin: 0.1,
            y_rmax: 10.0,
        }
    }
}

/// Draw one evaluation point from `dom`.
pub fn sample_point(n: usize, dom: &Domain, rng: &mut SeededRng) -> EvalPoint {
    let x: Vec<f64> = (0..n).map(|i| rng.uniform(dom.x_lo[i], dom.x_hi[i])).collect();
    // Rejection-sample a direction away from the coordinate origin of the
    // fiber, then rescale to a log-uniform radius.
    let y = loop {
        let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            let r = (rng.uniform(dom.y_rmin.ln(), dom.y_rmax.ln())).exp();
            break v.into_iter().map(|t| t * r / norm).collect::<Vec<f64>>();
        }
    };
    EvalPoint::new(x, y).expect("sampled point is valid by construction")
}

/// Draw `count` points with a fixed seed.
pub fn sample_points(n: usize, dom: &Domain, seed: u64, count: usize) -> Vec<EvalPoint> {
    let mut rng = SeededRng::new(seed);
    (0..count).map(|_| sample_point(n, dom, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let dom = Domain::default_box(3);
        let a = sample_points(3, &dom, 42, 16);
        let b = sample_points(3, &dom, 42, 16);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.x, q.x);
            assert_eq!(p.y, q.y);
        }
    }

    #[test]
    fn points_respect_the_domain() {
        let dom = Domain::default_box(3);
        for p in sample_points(3, &dom, 7, 200) {
            for &xi in &p.x {
                assert!((-0.5..=0.5).contains(&xi));
            }
            let r = p.y.iter().map(|t| t * t).sum::<f64>().sqrt();
            assert!(r >= 0.1 * (1.0 - 1e-12) && r <= 10.0 * (1.0 + 1e-12));
        }
    }
}
