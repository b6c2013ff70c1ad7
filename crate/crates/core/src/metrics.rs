//! Variance and similarity measurements.
//!
//! Inputs are measured as given; rows are never renormalized here so that
//! training diagnostics can report on slightly denormalized sets.

use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{domain, Result};
use crate::linalg;

/// Def.-style variance summary of an embedding set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VarianceReport {
    pub within_per_class: Vec<f64>,
    pub avg_within: f64,
    pub between: f64,
    /// `avg_within + between`; at most 1 for unit-norm rows.
    pub total_check: f64,
    /// `‖E[U]‖₂`.
    pub centroid_norm: f64,
}

fn mean_of(rows: &[f64], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    let count = rows.len() / dim;
    for row in rows.chunks_exact(dim) {
        linalg::axpy(1.0, row, &mut mean);
    }
    mean.iter_mut().for_each(|x| *x /= count as f64);
    mean
}

/// Mean squared distance of `rows` from their mean.
fn spread(rows: &[f64], dim: usize) -> f64 {
    let mean = mean_of(rows, dim);
    let count = rows.len() / dim;
    let total: f64 = rows
        .chunks_exact(dim)
        .map(|r| r.iter().zip(&mean).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
        .sum();
    total / count as f64
}

/// Mean of the whole set.
pub fn centroid(u: &EmbeddingSet) -> Vec<f64> {
    mean_of(u.as_slice(), u.dim())
}

/// Mean of class `i`.
pub fn class_mean(u: &EmbeddingSet, i: usize) -> Vec<f64> {
    mean_of(u.class_rows(i), u.dim())
}

/// `Var[U_i] = (1/|U_i|)·Σ_{u∈U_i} ‖u - E[U_i]‖²` for each class.
pub fn within_class_variance(u: &EmbeddingSet) -> Vec<f64> {
    (0..u.classes()).map(|i| spread(u.class_rows(i), u.dim())).collect()
}

/// Same quantity through the unit-sphere identity `1 - ‖E[U_i]‖²`; only
/// meaningful when every row has unit norm.
pub fn within_class_variance_on_sphere(u: &EmbeddingSet) -> Vec<f64> {
    (0..u.classes())
        .map(|i| {
            let mean = class_mean(u, i);
            1.0 - linalg::dot(&mean, &mean)
        })
        .collect()
}

/// Variance of the whole set, `(1/|U|)·Σ ‖u - E[U]‖²`.
pub fn total_variance(u: &EmbeddingSet) -> f64 {
    spread(u.as_slice(), u.dim())
}

/// Between-group variance with size weights,
/// `Σ_i (|G_i|/|U|)·‖E[G_i] - E[U]‖²`, for groups given as flat row slices.
pub fn weighted_between_variance(groups: &[&[f64]], dim: usize) -> f64 {
    let total_rows: usize = groups.iter().map(|g| g.len() / dim).sum();
    if total_rows == 0 {
        return 0.0;
    }
    let mut grand = vec![0.0; dim];
    for g in groups {
        for row in g.chunks_exact(dim) {
            linalg::axpy(1.0, row, &mut grand);
        }
    }
    grand.iter_mut().for_each(|x| *x /= total_rows as f64);
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let weight = (g.len() / dim) as f64 / total_rows as f64;
            let mean = mean_of(g, dim);
            weight * mean.iter().zip(&grand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

/// `Var^Btwn[U] = (1/m)·Σ_i ‖E[U_i] - E[U]‖²`. Classes have equal size, so
/// this is the size-weighted form with uniform weights.
pub fn between_class_variance(u: &EmbeddingSet) -> f64 {
    let groups: Vec<&[f64]> = (0..u.classes()).map(|i| u.class_rows(i)).collect();
    weighted_between_variance(&groups, u.dim())
}

pub fn variance_report(u: &EmbeddingSet) -> VarianceReport {
    let within_per_class = within_class_variance(u);
    let avg_within = within_per_class.iter().sum::<f64>() / within_per_class.len() as f64;
    let between = between_class_variance(u);
    let c = centroid(u);
    VarianceReport {
        within_per_class,
        avg_within,
        between,
        total_check: avg_within + between,
        centroid_norm: linalg::norm(&c),
    }
}

/// Checks `avg_within + between = Var[U] = 1 - ‖E[U]‖² <= 1` within `tol`.
pub fn variance_identity_check(u: &EmbeddingSet, tol: f64) -> bool {
    let report = variance_report(u);
    let total = total_variance(u);
    let on_sphere = 1.0 - report.centroid_norm * report.centroid_norm;
    (report.total_check - total).abs() <= tol
        && (total - on_sphere).abs() <= tol
        && report.total_check <= 1.0 + tol
}

/// Minimum same-class inner product over distinct rows minus the maximum
/// cross-class inner product. Non-negative means every same-class pair is
/// at least as similar as every cross-class pair.
pub fn similarity_margin(u: &EmbeddingSet) -> Result<f64> {
    if u.classes() < 2 {
        return Err(domain!("similarity margin needs at least two classes"));
    }
    let rows = u.len();
    let g = u.gram();
    let mut min_same = f64::INFINITY;
    let mut max_cross = f64::NEG_INFINITY;
    for a in 0..rows {
        let ca = u.position(a).class;
        for b in a + 1..rows {
            let v = g[a * rows + b];
            if u.position(b).class == ca {
                min_same = min_same.min(v);
            } else {
                max_cross = max_cross.max(v);
            }
        }
    }
    // With a single row per class there are no same-class pairs.
    if min_same == f64::INFINITY {
        min_same = 1.0;
    }
    Ok(min_same - max_cross)
}

fn instance_means(u: &EmbeddingSet) -> Vec<Vec<f64>> {
    let (d, p) = (u.dim(), u.augmentations());
    u.as_slice().chunks_exact(p * d).map(|rows| mean_of(rows, d)).collect()
}

/// `Σ_{i, j≠j'} E[U_ij]·E[U_ij']`, the statistic constrained in the
/// cross-class sum sub-problem.
pub fn instance_mean_products(u: &EmbeddingSet) -> f64 {
    let means = instance_means(u);
    let n = u.instances();
    let mut total = 0.0;
    for i in 0..u.classes() {
        for j in 0..n {
            for jj in 0..n {
                if j != jj {
                    total += linalg::dot(&means[i * n + j], &means[i * n + jj]);
                }
            }
        }
    }
    total
}

/// `Σ_{i, j≠j'} ‖E[U_ij] - E[U_ij']‖²`.
pub fn instance_mean_spread(u: &EmbeddingSet) -> f64 {
    let means = instance_means(u);
    let n = u.instances();
    let mut total = 0.0;
    for i in 0..u.classes() {
        for j in 0..n {
            for jj in 0..n {
                if j != jj {
                    let (a, b) = (&means[i * n + j], &means[i * n + jj]);
                    total += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_ssem, max_delta, SsemSpec};

    #[test]
    fn identical_rows_have_zero_spread() {
        let rows = vec![0.6, 0.8, 0.6, 0.8, 0.0, 1.0, -1.0, 0.0];
        let u = EmbeddingSet::new(2, 2, 1, 2, rows).unwrap();
        let w = within_class_variance(&u);
        assert_eq!(w[0], 0.0);
        assert!(w[1] > 0.0);
    }

    #[test]
    fn full_simplex_within_variance() {
        let u = build_ssem(SsemSpec::new(10, 10, 2, 1.0).unwrap(), 100).unwrap();
        for v in within_class_variance(&u) {
            assert!((v - 90.0 / 99.0).abs() < 1e-10);
        }
    }

    #[test]
    fn between_variance_values() {
        let u = build_ssem(SsemSpec::new(4, 3, 2, 0.0).unwrap(), 11).unwrap();
        assert!((between_class_variance(&u) - 1.0).abs() < 1e-12);
        let u = build_ssem(SsemSpec::new(10, 10, 2, 0.5).unwrap(), 100).unwrap();
        assert!((between_class_variance(&u) - (1.0 - 0.25 * 90.0 / 99.0)).abs() < 1e-10);
        let same = EmbeddingSet::new(2, 1, 1, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(between_class_variance(&same), 0.0);
    }

    #[test]
    fn weighted_form_with_unequal_groups() {
        // Groups {e1, e1} and {-e1}: grand mean e1/3.
        let a = [1.0, 0.0, 1.0, 0.0];
        let b = [-1.0, 0.0];
        let got = weighted_between_variance(&[&a, &b], 2);
        let want = (2.0 / 3.0) * (2.0f64 / 3.0).powi(2) + (1.0 / 3.0) * (4.0f64 / 3.0).powi(2);
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn ssem_reaches_variance_bound() {
        let u = build_ssem(SsemSpec::new(3, 4, 2, 0.7).unwrap(), 11).unwrap();
        assert!(variance_identity_check(&u, 1e-10));
        let r = variance_report(&u);
        assert!((r.total_check - 1.0).abs() < 1e-10);
        assert!(r.centroid_norm < 1e-10);
    }

    #[test]
    fn shifted_centroid_loses_total_variance() {
        let rows = vec![1.0, 0.0, 0.6, 0.8, 0.8, 0.6, 0.0, 1.0];
        let u = EmbeddingSet::new(2, 2, 1, 2, rows).unwrap();
        let r = variance_report(&u);
        assert!(r.total_check < 1.0 - 0.1);
        assert!(variance_identity_check(&u, 1e-12));
    }

    #[test]
    fn margins() {
        for &(m, n) in &[(2usize, 2usize), (3, 4)] {
            let mm = m as f64;
            let at = |d: f64| {
                similarity_margin(&build_ssem(SsemSpec::new(m, n, 1, d).unwrap(), m * n - 1).unwrap())
                    .unwrap()
            };
            assert!(at(1.0).abs() < 1e-10);
            assert!((at(0.5) - mm / (mm - 1.0) * 0.75).abs() < 1e-10);
            assert!(at(max_delta(m, n).unwrap()) < 0.0);
        }
        let one = build_ssem(SsemSpec::new(1, 3, 1, 1.0).unwrap(), 2).unwrap();
        assert!(similarity_margin(&one).is_err());
    }
}
