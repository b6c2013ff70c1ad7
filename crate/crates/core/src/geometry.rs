//! Simplex ETFs and the simplex-to-simplex embedding model.
//!
//! An `(c-1)`-simplex ETF is `c` unit vectors whose pairwise inner products
//! all equal `-1/(c-1)`. The SSEM with parameters `(m, n, p, δ)` places `mn`
//! instance vectors so that
//!
//! - same-class, different-instance pairs have inner product `1 - δ²·mn/(mn-1)`;
//! - cross-class pairs have inner product `-1/(m-1) + δ²·m(n-1)/((m-1)(mn-1))`;
//! - all `p` augmentations of one instance coincide.
//!
//! `δ = 0` collapses every class onto a vertex of an `(m-1)`-simplex ETF,
//! `δ = 1` spreads all instances on an `(mn-1)`-simplex ETF.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{domain, Error, Result};

/// Slack allowed when checking `δ` against its upper bound.
const DELTA_RANGE_SLACK: f64 = 1e-12;

/// Upper end of the admissible `δ` range, `sqrt((mn-1)/(m(n-1)))`.
pub fn max_delta(m: usize, n: usize) -> Result<f64> {
    if m < 1 {
        return Err(domain!("max_delta needs m >= 1, got {m}"));
    }
    if n < 2 {
        return Err(domain!("max_delta needs n >= 2, got {n}"));
    }
    let (m, n) = (m as f64, n as f64);
    Ok(libm::sqrt((m * n - 1.0) / (m * (n - 1.0))))
}

/// One point of the SSEM family.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SsemSpec {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub delta: f64,
}

impl SsemSpec {
    /// Validates the parameters. A `delta` within `1e-12` above the
    /// admissible maximum is clamped onto it.
    pub fn new(m: usize, n: usize, p: usize, delta: f64) -> Result<Self> {
        if m == 0 || n == 0 || p == 0 {
            return Err(domain!("m, n, p must be positive (got {m}, {n}, {p})"));
        }
        if m * n < 2 {
            return Err(domain!("SSEM needs m*n >= 2"));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(domain!("delta must be finite and non-negative, got {delta}"));
        }
        let delta = if n == 1 {
            if delta != 0.0 {
                return Err(domain!("with n = 1 the only admissible delta is 0, got {delta}"));
            }
            0.0
        } else {
            let hi = max_delta(m, n)?;
            if delta > hi + DELTA_RANGE_SLACK {
                return Err(domain!("delta {delta} exceeds max_delta({m}, {n}) = {hi}"));
            }
            delta.min(hi)
        };
        Ok(Self { m, n, p, delta })
    }

    /// Reparameterized `δ̃ = δ²·mn/(mn-1)` used by the closed-form loss.
    pub fn delta_tilde(&self) -> f64 {
        let mn = (self.m * self.n) as f64;
        self.delta * self.delta * mn / (mn - 1.0)
    }

    /// Target inner product between different instances of one class.
    pub fn same_class_target(&self) -> f64 {
        1.0 - self.delta_tilde()
    }

    /// Target inner product between classes; `None` when `m = 1`.
    pub fn cross_class_target(&self) -> Option<f64> {
        if self.m < 2 {
            return None;
        }
        let (m, n) = (self.m as f64, self.n as f64);
        let d2 = self.delta * self.delta;
        Some(-1.0 / (m - 1.0) + d2 * m * (n - 1.0) / ((m - 1.0) * (m * n - 1.0)))
    }
}

/// `count` vertices of a regular simplex centred at the origin, embedded in
/// the first `count - 1` coordinates of `R^dim`.
///
/// Vertex `i` is the centred basis vector `e_i - 1/count`, scaled to unit
/// norm and written in the Helmert basis of the subspace orthogonal to the
/// all-ones vector. The result is exact up to round-off and deterministic.
pub fn simplex_etf(count: usize, dim: usize) -> Result<EmbeddingSet> {
    if count < 2 {
        return Err(domain!("simplex ETF needs at least 2 vectors, got {count}"));
    }
    if dim < count - 1 {
        return Err(Error::DimensionTooSmall { required: count - 1, got: dim });
    }
    let scale = libm::sqrt(count as f64 / (count as f64 - 1.0));
    let mut data = vec![0.0; count * dim];
    // Helmert vector k (1-based) has entries 1/sqrt(k(k+1)) on the first k
    // positions and -k/sqrt(k(k+1)) at position k+1.
    for k in 1..count {
        let kf = k as f64;
        let inv = 1.0 / libm::sqrt(kf * (kf + 1.0));
        for i in 0..k {
            data[i * dim + (k - 1)] = scale * inv;
        }
        data[k * dim + (k - 1)] = -scale * kf * inv;
    }
    EmbeddingSet::normalized(count, 1, 1, dim, data)
}

/// Constructs the SSEM `U^δ` in `R^dim`.
///
/// For `m >= 2`, instance `(i, j)` is `δ·w_ij + h(δ)·Σ_j' w_ij'` over an
/// `(mn-1)`-simplex ETF `{w_ij}`, with the positive root
/// `h(δ) = -δ/n + (1/n)·sqrt((δ²m(1-n) + mn - 1)/(m-1))`.
///
/// With a single class the cross-class conditions are vacuous; the class
/// sum of the ETF vanishes, so the instances are `δ·w_j + sqrt(1-δ²)·e`
/// where `e` is the first unused coordinate. That needs `dim >= n` unless
/// `δ = 1`.
pub fn build_ssem(spec: SsemSpec, dim: usize) -> Result<EmbeddingSet> {
    let spec = SsemSpec::new(spec.m, spec.n, spec.p, spec.delta)?;
    let SsemSpec { m, n, p, delta } = spec;
    let count = m * n;
    if dim < count - 1 {
        return Err(Error::DimensionTooSmall { required: count - 1, got: dim });
    }
    let etf = simplex_etf(count, dim)?;

    let mut instances = vec![0.0; count * dim];
    if m == 1 {
        let lift = libm::sqrt((1.0 - delta * delta).max(0.0));
        if lift > 0.0 && dim < n {
            return Err(Error::DimensionTooSmall { required: n, got: dim });
        }
        for j in 0..n {
            let out = &mut instances[j * dim..(j + 1) * dim];
            for (o, w) in out.iter_mut().zip(etf.row(j)) {
                *o = delta * w;
            }
            if lift > 0.0 {
                out[n - 1] = lift;
            }
        }
    } else {
        let (mf, nf) = (m as f64, n as f64);
        let radicand = (delta * delta * mf * (1.0 - nf) + (mf * nf - 1.0)) / (mf - 1.0);
        let h = -delta / nf + libm::sqrt(radicand.max(0.0)) / nf;
        for i in 0..m {
            let mut class_sum = vec![0.0; dim];
            for j in 0..n {
                for (s, w) in class_sum.iter_mut().zip(etf.row(i * n + j)) {
                    *s += w;
                }
            }
            for j in 0..n {
                let out = &mut instances[(i * n + j) * dim..(i * n + j + 1) * dim];
                for ((o, w), s) in out.iter_mut().zip(etf.row(i * n + j)).zip(&class_sum) {
                    *o = delta * w + h * s;
                }
            }
        }
    }

    let mut data = Vec::with_capacity(count * p * dim);
    for inst in instances.chunks_exact(dim) {
        for _ in 0..p {
            data.extend_from_slice(inst);
        }
    }
    // Rows are unit-norm analytically; normalizing removes round-off only.
    EmbeddingSet::normalized(m, n, p, dim, data)
}

/// Largest deviation of a Gram matrix from the SSEM targets, split by pair
/// category.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GramReport {
    pub max_abs_residual: f64,
    /// Includes the diagonal (unit-norm condition).
    pub residual_same_instance: f64,
    pub residual_same_class: f64,
    pub residual_cross_class: f64,
    pub passed: bool,
}

/// Compares the Gram matrix of `u` against the targets of `spec`.
pub fn gram_check(u: &EmbeddingSet, spec: &SsemSpec, tol: f64) -> Result<GramReport> {
    if (u.classes(), u.instances(), u.augmentations()) != (spec.m, spec.n, spec.p) {
        return Err(Error::ShapeMismatch(format!(
            "embedding set is ({}, {}, {}) but spec is ({}, {}, {})",
            u.classes(),
            u.instances(),
            u.augmentations(),
            spec.m,
            spec.n,
            spec.p
        )));
    }
    let same_class = spec.same_class_target();
    let cross = spec.cross_class_target();
    let (mut r_inst, mut r_class, mut r_cross) = (0.0f64, 0.0f64, 0.0f64);
    let g = u.gram();
    let rows = u.len();
    for a in 0..rows {
        let pa = u.position(a);
        for b in a..rows {
            let pb = u.position(b);
            let v = g[a * rows + b];
            if pa.class != pb.class {
                // cross target exists whenever two classes exist
                let t = cross.unwrap_or(f64::NAN);
                r_cross = r_cross.max((v - t).abs());
            } else if pa.instance != pb.instance {
                r_class = r_class.max((v - same_class).abs());
            } else {
                r_inst = r_inst.max((v - 1.0).abs());
            }
        }
    }
    let max_abs_residual = r_inst.max(r_class).max(r_cross);
    Ok(GramReport {
        max_abs_residual,
        residual_same_instance: r_inst,
        residual_same_class: r_class,
        residual_cross_class: r_cross,
        passed: max_abs_residual <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner(u: &EmbeddingSet, a: usize, b: usize) -> f64 {
        u.row(a).iter().zip(u.row(b)).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn antipodal_pair() {
        let u = simplex_etf(2, 1).unwrap();
        assert!((u.row(0)[0] - 1.0).abs() < 1e-15);
        assert!((u.row(1)[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn tetrahedron_and_padded_triangle() {
        let u = simplex_etf(4, 3).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 1.0 } else { -1.0 / 3.0 };
                assert!((inner(&u, a, b) - want).abs() < 1e-12);
            }
        }
        let t = simplex_etf(3, 5).unwrap();
        for a in 0..3 {
            assert!((inner(&t, a, a) - 1.0).abs() < 1e-12);
            assert_eq!(&t.row(a)[2..], &[0.0, 0.0, 0.0]);
            for b in 0..a {
                assert!((inner(&t, a, b) + 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn simplex_errors() {
        assert!(matches!(simplex_etf(1, 3), Err(Error::Domain(_))));
        assert_eq!(
            simplex_etf(5, 3).unwrap_err(),
            Error::DimensionTooSmall { required: 4, got: 3 }
        );
    }

    #[test]
    fn max_delta_values() {
        assert!((max_delta(2, 2).unwrap() - libm::sqrt(1.5)).abs() < 1e-15);
        assert!((max_delta(10, 10).unwrap() - libm::sqrt(1.1)).abs() < 1e-15);
        assert_eq!(max_delta(1, 2).unwrap(), 1.0);
        assert!(max_delta(3, 1).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(SsemSpec::new(1, 1, 1, 0.0).is_err());
        assert!(SsemSpec::new(3, 1, 1, 0.1).is_err());
        assert!(SsemSpec::new(3, 1, 2, 0.0).is_ok());
        assert!(SsemSpec::new(2, 2, 1, 1.3).is_err());
        assert!(SsemSpec::new(2, 2, 1, -0.1).is_err());
        let s = SsemSpec::new(2, 2, 1, libm::sqrt(1.5) + 1e-13).unwrap();
        assert_eq!(s.delta, libm::sqrt(1.5));
    }

    #[test]
    fn ssem_at_delta_one_is_full_simplex() {
        let u = build_ssem(SsemSpec::new(2, 2, 1, 1.0).unwrap(), 3).unwrap();
        for a in 0..4 {
            for b in 0..a {
                assert!((inner(&u, a, b) + 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ssem_at_delta_zero_collapses_classes() {
        let u = build_ssem(SsemSpec::new(3, 4, 1, 0.0).unwrap(), 11).unwrap();
        for a in 0..12 {
            for b in 0..12 {
                let want = if a / 4 == b / 4 { 1.0 } else { -0.5 };
                assert!((inner(&u, a, b) - want).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn ssem_ten_by_ten_targets() {
        let spec = SsemSpec::new(10, 10, 2, 0.6).unwrap();
        let u = build_ssem(spec, 100).unwrap();
        let same = 1.0 - 0.36 * 100.0 / 99.0;
        let cross = -1.0 / 9.0 + 0.36 * 90.0 / (9.0 * 99.0);
        // (0,0,0) vs (0,3,1) and (0,0,0) vs (7,2,0)
        assert!((inner(&u, 0, 7) - same).abs() < 1e-10);
        assert!((inner(&u, 0, 144) - cross).abs() < 1e-10);
        let report = gram_check(&u, &spec, 1e-10).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn augmentations_are_identical_copies() {
        let u = build_ssem(SsemSpec::new(3, 4, 3, 0.8).unwrap(), 12).unwrap();
        for r in (0..u.len()).step_by(3) {
            assert_eq!(u.row(r), u.row(r + 1));
            assert_eq!(u.row(r), u.row(r + 2));
        }
    }

    #[test]
    fn delta_max_gives_regular_within_class_simplex() {
        let spec = SsemSpec::new(3, 4, 1, max_delta(3, 4).unwrap()).unwrap();
        let u = build_ssem(spec, 11).unwrap();
        assert!((spec.same_class_target() + 1.0 / 3.0).abs() < 1e-12);
        assert!(gram_check(&u, &spec, 1e-10).unwrap().passed);
    }

    #[test]
    fn single_class_family() {
        let spec = SsemSpec::new(1, 4, 2, 0.5).unwrap();
        let u = build_ssem(spec, 4).unwrap();
        let report = gram_check(&u, &spec, 1e-10).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.residual_cross_class, 0.0);
        assert_eq!(
            build_ssem(spec, 3).unwrap_err(),
            Error::DimensionTooSmall { required: 4, got: 3 }
        );
        // δ = 1 is the plain simplex and fits in n - 1 dimensions.
        let full = SsemSpec::new(1, 4, 1, 1.0).unwrap();
        assert!(gram_check(&build_ssem(full, 3).unwrap(), &full, 1e-10).unwrap().passed);
    }

    #[test]
    fn build_rejects_small_dimension() {
        let spec = SsemSpec::new(3, 3, 1, 0.5).unwrap();
        assert_eq!(
            build_ssem(spec, 7).unwrap_err(),
            Error::DimensionTooSmall { required: 8, got: 7 }
        );
    }

    #[test]
    fn gram_check_shape_mismatch() {
        let spec = SsemSpec::new(2, 2, 1, 0.5).unwrap();
        let u = build_ssem(SsemSpec::new(2, 2, 2, 0.5).unwrap(), 3).unwrap();
        assert!(matches!(gram_check(&u, &spec, 1e-10), Err(Error::ShapeMismatch(_))));
    }
}
