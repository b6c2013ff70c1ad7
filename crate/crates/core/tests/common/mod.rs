#![allow(dead_code)]

use collapse_core::EmbeddingSet;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn random_unit_set(m: usize, n: usize, p: usize, d: usize, seed: u64) -> EmbeddingSet {
    EmbeddingSet::normalized(m, n, p, d, gaussian(m * n * p * d, seed)).unwrap()
}

/// Rows are indexed `((i*n)+j)*p+k`.
pub struct Shape {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub d: usize,
}

impl Shape {
    fn split(&self, r: usize) -> (usize, usize) {
        (r / (self.n * self.p), (r / self.p) % self.n)
    }
}

fn logit(x: &[f64], a: usize, b: usize, d: usize, tau: f64) -> f64 {
    let (ra, rb) = (&x[a * d..(a + 1) * d], &x[b * d..(b + 1) * d]);
    ra.iter().zip(rb).map(|(p, q)| p * q).sum::<f64>() / tau
}

/// Plain double loop over anchors and positives, with no unit-norm check so
/// that it can be differentiated numerically off the sphere.
/// `restrict_to_class` gives the class-conditional normalizer.
fn brute(x: &[f64], s: &Shape, tau: f64, sup: bool, restrict_to_class: bool) -> f64 {
    let rows = s.m * s.n * s.p;
    let mut total = 0.0;
    for a in 0..rows {
        let (ia, ja) = s.split(a);
        let pool: Vec<usize> =
            (0..rows).filter(|&w| !restrict_to_class || s.split(w).0 == ia).collect();
        let zs: Vec<f64> = pool.iter().map(|&w| logit(x, a, w, s.d, tau)).collect();
        let top = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_den = top + zs.iter().map(|z| (z - top).exp()).sum::<f64>().ln();
        for b in 0..rows {
            let (ib, jb) = s.split(b);
            let positive = if sup { ib == ia && jb != ja } else { ib == ia && jb == ja };
            if positive {
                total -= logit(x, a, b, s.d, tau) - log_den;
            }
        }
    }
    let (m, n, p) = (s.m as f64, s.n as f64, s.p as f64);
    if sup {
        total / (m * n * (n - 1.0) * p * p)
    } else {
        total / (m * n * p * p)
    }
}

pub fn brute_supcl(x: &[f64], s: &Shape, tau: f64, alpha: f64) -> f64 {
    let mut v = 0.0;
    if alpha < 1.0 {
        v += (1.0 - alpha) * brute(x, s, tau, true, false);
    }
    if alpha > 0.0 {
        v += alpha * brute(x, s, tau, false, false);
    }
    v
}

pub fn brute_cnce(x: &[f64], s: &Shape, tau: f64) -> f64 {
    brute(x, s, tau, false, true)
}

pub fn shape_of(u: &EmbeddingSet) -> Shape {
    Shape { m: u.classes(), n: u.instances(), p: u.augmentations(), d: u.dim() }
}
