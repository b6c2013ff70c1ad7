//! Contrastive losses over a full [`EmbeddingSet`].
//!
//! Every anchor `u` uses the log-normalizer `log Σ_{w ∈ U} exp(u·w/τ)` over
//! the entire set (or over its own class for the class-conditional loss).
//! Positives are
//!
//! - supervised: same class, *different* instance, all augmentations;
//! - self-supervised: same instance, all augmentations including `u` itself.
//!
//! The normalizers are `1/(mn(n-1)p²)` and `1/(mnp²)` respectively, so both
//! losses are plain averages over (anchor, positive) pairs.

use alloc::vec::Vec;

use crate::embedding::EmbeddingSet;
use crate::error::{domain, Result};
use crate::linalg::log_sum_exp;

/// Rows fed to a loss must be unit-norm within this tolerance.
pub const LOSS_NORM_TOL: f64 = 1e-8;

const RANGE_SLACK: f64 = 1e-12;

/// Temperature and loss-combining coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossParams {
    pub tau: f64,
    pub alpha: f64,
}

impl LossParams {
    pub fn new(tau: f64, alpha: f64) -> Result<Self> {
        check_tau(tau)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(domain!("alpha must lie in [0, 1], got {alpha}"));
        }
        Ok(Self { tau, alpha })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.tau, self.alpha).map(|_| ())
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(domain!("temperature must be positive and finite, got {tau}"));
    }
    Ok(())
}

/// Per-anchor logits and log-normalizers over the whole set.
struct Logits {
    rows: usize,
    /// `u_a · u_b / τ`, row-major.
    z: Vec<f64>,
    /// `log Σ_b exp(z_ab)` per anchor.
    lse: Vec<f64>,
}

impl Logits {
    fn new(u: &EmbeddingSet, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        u.check_unit_norm(LOSS_NORM_TOL)?;
        let rows = u.len();
        let mut z = u.gram();
        z.iter_mut().for_each(|v| *v /= tau);
        let lse = z
            .chunks_exact(rows)
            .map(|r| log_sum_exp(r.iter().copied()))
            .collect();
        Ok(Self { rows, z, lse })
    }

    fn at(&self, a: usize, b: usize) -> f64 {
        self.z[a * self.rows + b]
    }
}

fn sup_term(u: &EmbeddingSet, logits: &Logits) -> f64 {
    let (m, n, p) = (u.classes(), u.instances(), u.augmentations());
    let mut total = 0.0;
    for a in 0..u.len() {
        let pa = u.position(a);
        let class_start = pa.class * n * p;
        let mut anchor = 0.0;
        for b in class_start..class_start + n * p {
            if u.position(b).instance != pa.instance {
                anchor += logits.lse[a] - logits.at(a, b);
            }
        }
        total += anchor;
    }
    total / ((m * n * (n - 1) * p * p) as f64)
}

fn self_term(u: &EmbeddingSet, logits: &Logits) -> f64 {
    let (m, n, p) = (u.classes(), u.instances(), u.augmentations());
    let mut total = 0.0;
    for a in 0..u.len() {
        let start = a - a % p;
        let mut anchor = 0.0;
        for b in start..start + p {
            anchor += logits.lse[a] - logits.at(a, b);
        }
        total += anchor;
    }
    total / ((m * n * p * p) as f64)
}

/// Supervised contrastive loss. Needs at least two instances per class.
pub fn sup_loss(u: &EmbeddingSet, tau: f64) -> Result<f64> {
    if u.instances() < 2 {
        return Err(domain!("supervised loss needs n >= 2, got n = {}", u.instances()));
    }
    let logits = Logits::new(u, tau)?;
    Ok(sup_term(u, &logits))
}

/// Self-supervised (InfoNCE) loss; the pair `(u, u)` counts as a positive.
pub fn self_loss(u: &EmbeddingSet, tau: f64) -> Result<f64> {
    let logits = Logits::new(u, tau)?;
    Ok(self_term(u, &logits))
}

/// `(1 - α)·sup_loss + α·self_loss`. At `α = 1` the supervised term is not
/// evaluated, which admits `n = 1`; at `α = 0` the self term is skipped.
pub fn supcl_loss(u: &EmbeddingSet, params: LossParams) -> Result<f64> {
    params.validate()?;
    let alpha = params.alpha;
    if alpha < 1.0 && u.instances() < 2 {
        return Err(domain!(
            "supervised term needs n >= 2 unless alpha = 1, got n = {}",
            u.instances()
        ));
    }
    let logits = Logits::new(u, params.tau)?;
    let mut loss = 0.0;
    if alpha < 1.0 {
        loss += (1.0 - alpha) * sup_term(u, &logits);
    }
    if alpha > 0.0 {
        loss += alpha * self_term(u, &logits);
    }
    Ok(loss)
}

/// Class-conditional InfoNCE: like [`self_loss`] but each anchor's
/// normalizer only runs over its own class.
pub fn cnce_loss(u: &EmbeddingSet, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    u.check_unit_norm(LOSS_NORM_TOL)?;
    let (m, n, p) = (u.classes(), u.instances(), u.augmentations());
    let per_class = n * p;
    let mut total = 0.0;
    for i in 0..m {
        let rows = u.class_rows(i);
        let d = u.dim();
        let class_set = EmbeddingSet::from_raw(1, n, p, d, rows.to_vec())?;
        let g = class_set.gram();
        for a in 0..per_class {
            let z = &g[a * per_class..(a + 1) * per_class];
            let lse = log_sum_exp(z.iter().map(|v| v / tau));
            let start = a - a % p;
            for b in start..start + p {
                total += lse - z[b] / tau;
            }
        }
    }
    Ok(total / ((m * n * p * p) as f64))
}

fn check_delta_tilde(delta_tilde: f64, n: usize) -> Result<f64> {
    let hi = n as f64 / (n as f64 - 1.0);
    if !(delta_tilde >= -RANGE_SLACK && delta_tilde <= hi + RANGE_SLACK) {
        return Err(domain!("delta_tilde must lie in [0, {hi}], got {delta_tilde}"));
    }
    Ok(delta_tilde.clamp(0.0, hi))
}

/// Closed-form SupCL loss of the SSEM with `δ̃ = δ²·mn/(mn-1)`:
///
/// `log(1 + (n-1)e^{-δ̃/τ} + (m-1)n·e^{(-m/(m-1) + δ̃(n-1)/((m-1)n))/τ}) + log p + (1-α)δ̃/τ`
pub fn ssem_supcl_loss(
    delta_tilde: f64,
    m: usize,
    n: usize,
    p: usize,
    params: LossParams,
) -> Result<f64> {
    params.validate()?;
    if m < 2 || n < 2 || p < 1 {
        return Err(domain!("closed form needs m >= 2, n >= 2, p >= 1 (got {m}, {n}, {p})"));
    }
    let x = check_delta_tilde(delta_tilde, n)?;
    Ok(closed_form(x, m as f64, n as f64, p as f64, params.tau, params.alpha))
}

#[inline]
pub(crate) fn closed_form(x: f64, m: f64, n: f64, p: f64, tau: f64, alpha: f64) -> f64 {
    let same = (n - 1.0) * libm::exp(-x / tau);
    let cross = (m - 1.0) * n * libm::exp((-m / (m - 1.0) + x * (n - 1.0) / ((m - 1.0) * n)) / tau);
    libm::log(1.0 + same + cross) + libm::log(p) + (1.0 - alpha) * x / tau
}

/// Closed-form class-conditional InfoNCE loss of the SSEM,
/// `log((n-1)p·e^{-δ̃/τ} + p)`.
pub fn ssem_cnce_loss(delta_tilde: f64, n: usize, p: usize, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if n < 2 || p < 1 {
        return Err(domain!("closed form needs n >= 2, p >= 1 (got {n}, {p})"));
    }
    let x = check_delta_tilde(delta_tilde, n)?;
    let (n, p) = (n as f64, p as f64);
    Ok(libm::log((n - 1.0) * p * libm::exp(-x / tau) + p))
}
