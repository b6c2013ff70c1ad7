//! Analytic predictions for the optimal SSEM parameter and class collapse.
//!
//! On the SSEM the combined loss depends on `δ` only through
//! `x = δ̃ = δ²·mn/(mn-1)`, and its derivative in `x` has the sign of
//!
//! `h(x) = (1-α) - α(n-1)e^{-x/τ} + (mn-1-α(m-1)n)·e^{(-m/(m-1) + x(n-1)/((m-1)n))/τ}`,
//!
//! which is strictly increasing on `[0, n/(n-1)]` and non-negative at
//! `x = mn/(mn-1)` (i.e. `δ = 1`). Hence the minimizer is `x* = 0` when
//! `h(0) >= 0` (class collapse) and the unique root of `h` otherwise.

use crate::error::{domain, Result};
use crate::geometry::max_delta;
use crate::loss::check_tau;

const RANGE_SLACK: f64 = 1e-12;

/// Above this exponent `exp` overflows soon; thresholds switch to a
/// rearranged form that only evaluates `exp(-a)`.
const EXP_LIMIT: f64 = 700.0;

/// Bisection stops once the bracket is no wider than this. It also stops
/// when the midpoint can no longer be separated from an endpoint.
pub const ROOT_TOL: f64 = 1e-13;

const MAX_BISECTIONS: usize = 2000;

fn check_mn(m: usize, n: usize) -> Result<()> {
    if m < 2 || n < 2 {
        return Err(domain!("needs m >= 2 and n >= 2, got m = {m}, n = {n}"));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(domain!("alpha must lie in [0, 1], got {alpha}"));
    }
    Ok(())
}

#[inline]
fn h_unchecked(x: f64, m: f64, n: f64, tau: f64, alpha: f64) -> f64 {
    (1.0 - alpha) - alpha * (n - 1.0) * libm::exp(-x / tau)
        + (m * n - 1.0 - alpha * (m - 1.0) * n)
            * libm::exp((-m / (m - 1.0) + x * (n - 1.0) / ((m - 1.0) * n)) / tau)
}

/// The sign function of the SSEM loss derivative, evaluated at `x = δ̃`.
pub fn h_fn(x: f64, m: usize, n: usize, tau: f64, alpha: f64) -> Result<f64> {
    check_mn(m, n)?;
    check_tau(tau)?;
    check_alpha(alpha)?;
    let hi = n as f64 / (n as f64 - 1.0);
    if !(x >= -RANGE_SLACK && x <= hi + RANGE_SLACK) {
        return Err(domain!("x must lie in [0, {hi}], got {x}"));
    }
    Ok(h_unchecked(x.clamp(0.0, hi), m as f64, n as f64, tau, alpha))
}

/// Optimal SSEM parameter for given hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeltaSolution {
    /// In `[0, 1]`.
    pub delta_star: f64,
    /// `delta_star²·mn/(mn-1)`.
    pub delta_tilde_star: f64,
    /// True iff `h(0) >= 0`, in which case `delta_star = 0`.
    pub collapsed: bool,
    /// `h(delta_tilde_star)`.
    pub h_residual: f64,
    /// Bisection steps taken (0 when collapsed or analytic).
    pub iterations: usize,
}

/// Solves for `δ*` by bisection on `x ∈ (0, mn/(mn-1)]`.
pub fn solve_delta_star(m: usize, n: usize, tau: f64, alpha: f64) -> Result<DeltaSolution> {
    check_mn(m, n)?;
    check_tau(tau)?;
    check_alpha(alpha)?;
    let (mf, nf) = (m as f64, n as f64);
    let mn = mf * nf;
    let x_max = mn / (mn - 1.0);
    let h = |x: f64| h_unchecked(x, mf, nf, tau, alpha);

    let h0 = h(0.0);
    if h0 >= 0.0 {
        return Ok(DeltaSolution {
            delta_star: 0.0,
            delta_tilde_star: 0.0,
            collapsed: true,
            h_residual: h0,
            iterations: 0,
        });
    }
    if alpha == 1.0 {
        // h vanishes identically at x = mn/(mn-1) when α = 1.
        return Ok(DeltaSolution {
            delta_star: 1.0,
            delta_tilde_star: x_max,
            collapsed: false,
            h_residual: h(x_max),
            iterations: 0,
        });
    }

    let (mut lo, mut hi) = (0.0, x_max);
    let mut iterations = 0;
    while iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(hi - lo <= ROOT_TOL);
    let x = if (-h(lo)) < h(hi) { lo } else { hi };
    let delta_star = libm::sqrt(x * (mn - 1.0) / mn).min(1.0);
    Ok(DeltaSolution {
        delta_star,
        delta_tilde_star: delta_star * delta_star * mn / (mn - 1.0),
        collapsed: false,
        h_residual: h(x),
        iterations,
    })
}

/// Smallest `α` (exclusive) that prevents class collapse at temperature `τ`:
/// `(mn-1+E)/(mn-n+nE)` with `E = exp((m/(m-1))/τ)`.
pub fn alpha_threshold(m: usize, n: usize, tau: f64) -> Result<f64> {
    check_mn(m, n)?;
    check_tau(tau)?;
    let (mf, nf) = (m as f64, n as f64);
    let a = (mf / (mf - 1.0)) / tau;
    if a <= EXP_LIMIT {
        let e = libm::exp(a);
        Ok((mf * nf - 1.0 + e) / (mf * nf - nf + nf * e))
    } else {
        // Same quantity written as 1/n + m(n-1)/(n(m-1+E)).
        let inv = libm::exp(-a) / (1.0 + (mf - 1.0) * libm::exp(-a));
        Ok(1.0 / nf + mf * (nf - 1.0) / nf * inv)
    }
}

/// Largest temperature (exclusive) that prevents class collapse at `α`:
/// `1/((1-1/m)·log((mn-1-α(m-1)n)/(αn-1)))`. Returns `f64::INFINITY` at
/// `α = 1`, where no temperature causes collapse.
pub fn tau_threshold(m: usize, n: usize, alpha: f64) -> Result<f64> {
    check_mn(m, n)?;
    check_alpha(alpha)?;
    let (mf, nf) = (m as f64, n as f64);
    if alpha * nf <= 1.0 {
        return Err(domain!("tau threshold needs alpha > 1/n = {}, got {alpha}", 1.0 / nf));
    }
    if alpha == 1.0 {
        return Ok(f64::INFINITY);
    }
    let ratio = (mf * nf - 1.0 - alpha * (mf - 1.0) * nf) / (alpha * nf - 1.0);
    Ok(1.0 / ((1.0 - 1.0 / mf) * libm::log(ratio)))
}

/// Safe hyperparameter region: collapse is avoided iff `α > alpha_min`
/// (at the given `τ`) or equivalently `τ < tau_max` (at the given `α`).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CollapseBound {
    pub alpha_min: f64,
    /// `None` when `α <= 1/n` (every temperature collapses);
    /// `Some(f64::INFINITY)` at `α = 1`.
    pub tau_max: Option<f64>,
}

pub fn collapse_bound(m: usize, n: usize, tau: f64, alpha: f64) -> Result<CollapseBound> {
    let alpha_min = alpha_threshold(m, n, tau)?;
    check_alpha(alpha)?;
    let tau_max = if alpha * n as f64 > 1.0 { Some(tau_threshold(m, n, alpha)?) } else { None };
    Ok(CollapseBound { alpha_min, tau_max })
}

/// `(within, between)` class variances of the SSEM at `δ`:
/// `within = δ²·m(n-1)/(mn-1)`, `between = 1 - within`.
pub fn predicted_variances(delta: f64, m: usize, n: usize) -> Result<(f64, f64)> {
    let hi = max_delta(m, n)?;
    if !(delta >= 0.0 && delta <= hi + RANGE_SLACK) {
        return Err(domain!("delta must lie in [0, {hi}], got {delta}"));
    }
    let (mf, nf) = (m as f64, n as f64);
    let within = delta * delta * mf * (nf - 1.0) / (mf * nf - 1.0);
    Ok((within, 1.0 - within))
}

/// Prediction with the class size `n` replaced by a per-class batch size.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EffectivePrediction {
    pub n_eff: usize,
    pub solution: DeltaSolution,
    pub within: f64,
    pub between: f64,
}

/// Runs [`solve_delta_star`] and [`predicted_variances`] with `n := n_eff`,
/// the number of same-class instances that share a mini-batch.
pub fn effective_n_prediction(
    m: usize,
    n_eff: usize,
    tau: f64,
    alpha: f64,
) -> Result<EffectivePrediction> {
    let solution = solve_delta_star(m, n_eff, tau, alpha)?;
    let (within, between) = predicted_variances(solution.delta_star, m, n_eff)?;
    Ok(EffectivePrediction { n_eff, solution, within, between })
}

/// Closed-form `δ(c)` of the two constrained sub-problems used in the
/// optimality argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmaOracle {
    /// `c = Σ_{i, j≠j'} E[U_ij]·E[U_ij']` over `[-mn, mn(n-1)]`;
    /// `δ = sqrt((mn-1)/(mn) - (mn-1)c/(m²n²(n-1)))`.
    MeanProducts,
    /// `c = Σ_{i, j≠j'} ‖E[U_ij] - E[U_ij']‖²` over `[0, 2mn²]`;
    /// `δ = sqrt((mn-1)c/(2m²n²(n-1)))`.
    MeanSpread,
}

pub fn lemma_delta(c: f64, m: usize, n: usize, which: LemmaOracle) -> Result<f64> {
    if m < 1 || n < 2 {
        return Err(domain!("needs m >= 1 and n >= 2, got m = {m}, n = {n}"));
    }
    let (mf, nf) = (m as f64, n as f64);
    let mn = mf * nf;
    let (lo, hi) = match which {
        LemmaOracle::MeanProducts => (-mn, mn * (nf - 1.0)),
        LemmaOracle::MeanSpread => (0.0, 2.0 * mf * nf * nf),
    };
    let slack = RANGE_SLACK * (hi - lo);
    if !(c >= lo - slack && c <= hi + slack) {
        return Err(domain!("c must lie in [{lo}, {hi}], got {c}"));
    }
    let c = c.clamp(lo, hi);
    let sq = match which {
        LemmaOracle::MeanProducts => (mn - 1.0) / mn - (mn - 1.0) * c / (mn * mn * (nf - 1.0)),
        LemmaOracle::MeanSpread => (mn - 1.0) * c / (2.0 * mn * mn * (nf - 1.0)),
    };
    Ok(libm::sqrt(sq.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_at_delta_one() {
        for &(m, n, tau, alpha) in &[(10, 10, 0.1, 0.3), (3, 4, 0.7, 0.9), (2, 5, 0.05, 0.0)] {
            let (mf, nf) = (m as f64, n as f64);
            let x = mf * nf / (mf * nf - 1.0);
            let want = (1.0 - alpha) * (1.0 + (mf * nf - 1.0) * libm::exp(-x / tau));
            let got = h_fn(x, m, n, tau, alpha).unwrap();
            assert!((got - want).abs() <= 1e-12 * (1.0 + want), "{got} {want}");
            assert!(got >= 0.0);
        }
    }

    #[test]
    fn h_at_zero_without_self_term() {
        let (m, n, tau) = (4usize, 6usize, 0.35);
        let want = 1.0 + 23.0 * libm::exp(-(4.0 / 3.0) / tau);
        assert!((h_fn(0.0, m, n, tau, 0.0).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn h_root_at_full_simplex_for_alpha_one() {
        let x = 12.0 / 11.0;
        assert!(h_fn(x, 3, 4, 0.2, 1.0).unwrap().abs() < 1e-12);
        assert!(h_fn(x - 0.01, 3, 4, 0.2, 1.0).unwrap() < 0.0);
        assert!(h_fn(x + 0.01, 3, 4, 0.2, 1.0).unwrap() > 0.0);
    }

    #[test]
    fn h_is_increasing() {
        let hi = 10.0 / 9.0;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=400 {
            let x = hi * k as f64 / 400.0;
            let v = h_fn(x, 10, 10, 0.1, 0.5).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn solver_endpoints() {
        let s = solve_delta_star(10, 10, 0.1, 0.0).unwrap();
        assert!(s.collapsed);
        assert_eq!(s.delta_star, 0.0);
        let s = solve_delta_star(10, 10, 0.1, 1.0).unwrap();
        assert!(!s.collapsed);
        assert_eq!(s.delta_star, 1.0);
        assert!(s.h_residual.abs() < 1e-12);
    }

    #[test]
    fn solver_interior_root() {
        let s = solve_delta_star(10, 10, 0.1, 0.5).unwrap();
        assert!(!s.collapsed);
        assert!(s.delta_star > 0.0 && s.delta_star < 1.0);
        assert!(s.h_residual.abs() <= 1e-12);
        assert!((s.delta_tilde_star - s.delta_star * s.delta_star * 100.0 / 99.0).abs() < 1e-12);
    }

    #[test]
    fn thresholds_from_large_n_example() {
        let a = alpha_threshold(10, 1_000_000, 0.5).unwrap();
        assert!((a - 0.549).abs() < 1e-3, "{a}");
        let a = alpha_threshold(10, 1_000_000, 0.9).unwrap();
        assert!((a - 0.804).abs() < 1e-3, "{a}");
        let e = libm::exp(100.0 / 9.0);
        let want = (99.0 + e) / (90.0 + 10.0 * e);
        assert!((alpha_threshold(10, 10, 0.1).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.1001).abs() < 1e-4);
    }

    #[test]
    fn threshold_branches_agree() {
        // At a = EXP_LIMIT both forms are evaluable; compare them there.
        let (m, n) = (10usize, 10usize);
        let tau = (10.0 / 9.0) / EXP_LIMIT;
        let direct = alpha_threshold(m, n, tau).unwrap();
        let a = (10.0 / 9.0) / tau;
        let inv = libm::exp(-a) / (1.0 + 9.0 * libm::exp(-a));
        let rearranged = 0.1 + 10.0 * 9.0 / 10.0 * inv;
        assert!((direct - rearranged).abs() < 1e-15);
        assert!((alpha_threshold(m, n, 1e-3).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn tau_threshold_values() {
        let t = tau_threshold(10, 1_000_000, 0.5).unwrap();
        assert!((t - 1.0 / (0.9 * libm::log(11.0))).abs() < 1e-4, "{t}");
        assert_eq!(tau_threshold(10, 10, 1.0).unwrap(), f64::INFINITY);
        assert!(tau_threshold(10, 10, 0.1).is_err());
        assert!(tau_threshold(10, 10, 0.1 + 1e-9).unwrap() < 0.1);
        let tau = 0.3;
        let a = alpha_threshold(5, 20, tau).unwrap();
        assert!((tau_threshold(5, 20, a).unwrap() - tau).abs() < 1e-9);
    }

    #[test]
    fn collapse_bound_sentinels() {
        let b = collapse_bound(10, 10, 0.1, 1.0).unwrap();
        assert_eq!(b.tau_max, Some(f64::INFINITY));
        let b = collapse_bound(10, 10, 0.1, 0.05).unwrap();
        assert_eq!(b.tau_max, None);
        assert!(b.alpha_min > 0.1 && b.alpha_min < 1.0);
    }

    #[test]
    fn variance_predictions() {
        assert_eq!(predicted_variances(0.0, 10, 10).unwrap(), (0.0, 1.0));
        let (w, b) = predicted_variances(1.0, 10, 10).unwrap();
        assert!((w - 90.0 / 99.0).abs() < 1e-15 && (b - 9.0 / 99.0).abs() < 1e-15);
        let (w, b) = predicted_variances(max_delta(4, 3).unwrap(), 4, 3).unwrap();
        assert!((w - 1.0).abs() < 1e-15 && b.abs() < 1e-15);
        assert!(predicted_variances(1.2, 10, 10).is_err());
    }

    #[test]
    fn effective_n_substitution() {
        let plain = solve_delta_star(10, 10, 0.1, 0.5).unwrap();
        let eff = effective_n_prediction(10, 10, 0.1, 0.5).unwrap();
        assert_eq!(eff.solution, plain);
        let small = effective_n_prediction(10, 10, 0.1, 0.5).unwrap();
        let large = effective_n_prediction(10, 200, 0.1, 0.5).unwrap();
        assert!((small.within - large.within).abs() > 1e-3);
    }

    #[test]
    fn lemma_endpoints() {
        let (m, n) = (3usize, 5usize);
        let mn = 15.0;
        assert!(lemma_delta(mn * 4.0, m, n, LemmaOracle::MeanProducts).unwrap().abs() < 1e-12);
        let top = lemma_delta(-mn, m, n, LemmaOracle::MeanProducts).unwrap();
        assert!((top - max_delta(m, n).unwrap()).abs() < 1e-12);
        assert!(lemma_delta(-mn - 1.0, m, n, LemmaOracle::MeanProducts).is_err());
        assert!(lemma_delta(-0.1, m, n, LemmaOracle::MeanSpread).is_err());
        assert_eq!(lemma_delta(0.0, m, n, LemmaOracle::MeanSpread).unwrap(), 0.0);
    }
}
