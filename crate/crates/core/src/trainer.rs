//! Direct optimization of unit-norm embeddings under the SupCL loss.
//!
//! Each step runs full-batch Adam on a raw parameter matrix whose rows are
//! mapped onto the unit sphere. Adam's moments follow the raw coordinates
//! and are never reset. See [`Projection`] for the two ways of keeping the
//! rows on the sphere.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::adam::Adam;
pub use crate::adam::AdamConfig;
use crate::embedding::EmbeddingSet;
use crate::error::{domain, Error, Result};
use crate::linalg;
use crate::loss::{LossParams, LOSS_NORM_TOL};
use crate::metrics::{self, VarianceReport};

/// How the raw parameters are tied to the unit-norm embeddings.
///
/// Feeding the Euclidean gradient at unit rows straight into Adam (the
/// `Renormalize` scheme) lets its radial part dominate the per-coordinate
/// step sizes. The rows then drift towards vectors whose coordinates all
/// have the same magnitude, and at large temperatures training settles far
/// from the optimum. `Normalize` avoids this and is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Projection {
    /// Embeddings are the row-normalized parameters and the loss is
    /// differentiated through the normalization. Raw rows keep whatever
    /// norm Adam gives them, which shrinks the angular step over time.
    #[default]
    Normalize,
    /// Adam steps on the Euclidean gradient, then every row is rescaled to
    /// unit norm.
    Renormalize,
}

/// Settings for one synthetic training run. The defaults are 10 classes of
/// 10 instances with 2 augmentations in 100 dimensions, Adam at learning
/// rate 0.5 for 1000 epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub loss: LossParams,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub projection: Projection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m: 10,
            n: 10,
            p: 2,
            d: 100,
            loss: LossParams { tau: 0.1, alpha: 0.5 },
            epochs: 1000,
            learning_rate: 0.5,
            seed: 0,
            adam: AdamConfig::default(),
            projection: Projection::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.p == 0 || self.d == 0 {
            return Err(domain!("m, n, p, d must be positive"));
        }
        self.loss.validate()?;
        if self.loss.alpha < 1.0 && self.n < 2 {
            return Err(domain!("supervised term needs n >= 2 unless alpha = 1"));
        }
        if self.epochs == 0 {
            return Err(domain!("epochs must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(domain!("learning rate must be positive, got {}", self.learning_rate));
        }
        let AdamConfig { beta1, beta2, epsilon } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
            return Err(domain!("invalid Adam moments ({beta1}, {beta2}, {epsilon})"));
        }
        Ok(())
    }
}

/// State after a given number of updates. Epoch 0 is the initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub avg_within_var: f64,
    pub between_var: f64,
    /// Smallest raw row norm right after the Adam update.
    pub min_row_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn initial(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Gaussian rows scaled to unit norm.
///
/// Row `r` draws its `d` coordinates from a ChaCha8 generator seeded with
/// `seed` on stream `r`, so the result does not depend on the order in
/// which rows are generated.
pub fn init_embeddings(config: &TrainConfig) -> Result<EmbeddingSet> {
    let rows = config.m * config.n * config.p;
    let d = config.d;
    let mut data = Vec::with_capacity(rows * d);
    for r in 0..rows {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        data.extend((0..d).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
    }
    EmbeddingSet::normalized(config.m, config.n, config.p, d, data)
}

/// Loss value and Euclidean gradient of the SupCL loss with respect to
/// every coordinate.
///
/// Writing `z_ab = u_a·u_b/τ` and `s_ab` for the softmax of anchor `a`,
/// the loss is `Σ_a [ (1/N)·lse_a - Σ_b w_ab z_ab ]` with positive weights
/// `w_ab = (1-α)/(mn(n-1)p²)` (supervised) or `α/(mnp²)` (self). With
/// `C_ab = s_ab/N - w_ab` the gradient is `∇u_a = Σ_b (C_ab + C_ba)·u_b/τ`.
pub fn loss_and_grad(u: &EmbeddingSet, params: LossParams) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    u.check_unit_norm(LOSS_NORM_TOL)?;
    let (m, n, p, d) = (u.classes(), u.instances(), u.augmentations(), u.dim());
    let alpha = params.alpha;
    if alpha < 1.0 && n < 2 {
        return Err(domain!("supervised term needs n >= 2 unless alpha = 1"));
    }
    let rows = u.len();
    let tau = params.tau;
    let inv_rows = 1.0 / rows as f64;
    let w_sup = if alpha < 1.0 {
        (1.0 - alpha) / ((m * n * (n - 1) * p * p) as f64)
    } else {
        0.0
    };
    let w_self = alpha / ((m * n * p * p) as f64);

    let mut coef = u.gram();
    let mut loss = 0.0;
    for a in 0..rows {
        let row = &mut coef[a * rows..(a + 1) * rows];
        row.iter_mut().for_each(|v| *v /= tau);
        let lse = linalg::log_sum_exp(row.iter().copied());
        let class_start = a - a % (n * p);
        let inst_start = a - a % p;
        let mut anchor = inv_rows * lse;
        for (b, z) in row.iter_mut().enumerate() {
            let w = if (inst_start..inst_start + p).contains(&b) {
                w_self
            } else if (class_start..class_start + n * p).contains(&b) {
                w_sup
            } else {
                0.0
            };
            anchor -= w * *z;
            *z = inv_rows * libm::exp(*z - lse) - w;
        }
        loss += anchor;
    }

    let mut grad = vec![0.0; rows * d];
    let data = u.as_slice();
    for a in 0..rows {
        let out = &mut grad[a * d..(a + 1) * d];
        for b in 0..rows {
            let s = (coef[a * rows + b] + coef[b * rows + a]) / tau;
            linalg::axpy(s, &data[b * d..(b + 1) * d], out);
        }
    }
    Ok((loss, grad))
}

/// Variance report of a trained set.
pub fn measure(u: &EmbeddingSet) -> VarianceReport {
    metrics::variance_report(u)
}

fn record(epoch: usize, loss: f64, u: &EmbeddingSet, min_row_norm: f64) -> EpochRecord {
    let within = metrics::within_class_variance(u);
    EpochRecord {
        epoch,
        loss,
        avg_within_var: within.iter().sum::<f64>() / within.len() as f64,
        between_var: metrics::between_class_variance(u),
        min_row_norm,
    }
}

/// Gradient with respect to raw rows `w` of the loss at `w/‖w‖`, given the
/// Euclidean gradient at the unit rows `u`: `(g - (u·g)·u)/‖w‖`.
fn through_normalization(grad: &mut [f64], unit: &[f64], raw_norms: &[f64], d: usize) {
    for ((g, u), &norm) in grad.chunks_exact_mut(d).zip(unit.chunks_exact(d)).zip(raw_norms) {
        let radial = linalg::dot(u, g);
        for (gi, ui) in g.iter_mut().zip(u) {
            *gi = (*gi - radial * ui) / norm;
        }
    }
}

/// Runs the full training loop; deterministic for a fixed config.
pub fn train(config: &TrainConfig) -> Result<(EmbeddingSet, TrainHistory)> {
    config.validate()?;
    let mut u = init_embeddings(config)?;
    let d = config.d;
    let mut raw = u.as_slice().to_vec();
    let mut raw_norms = vec![1.0; u.len()];
    let mut adam = Adam::new(raw.len(), config.learning_rate, config.adam);
    let mut history = TrainHistory { records: Vec::with_capacity(config.epochs + 1) };

    let (mut loss, mut grad) = loss_and_grad(&u, config.loss)?;
    if !loss.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss });
    }
    let initial_norm = u.row_norms().fold(f64::INFINITY, f64::min);
    history.records.push(record(0, loss, &u, initial_norm));

    for epoch in 1..=config.epochs {
        if config.projection == Projection::Normalize {
            through_normalization(&mut grad, u.as_slice(), &raw_norms, d);
        }
        adam.step(&mut raw, &grad);
        for (norm, row) in raw_norms.iter_mut().zip(raw.chunks_exact(d)) {
            *norm = linalg::norm(row);
        }
        let min_norm = raw_norms.iter().copied().fold(f64::INFINITY, f64::min);
        if !min_norm.is_finite() || min_norm == 0.0 {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        u.data_mut().copy_from_slice(&raw);
        u.renormalize();
        if config.projection == Projection::Renormalize {
            raw.copy_from_slice(u.as_slice());
            raw_norms.fill(1.0);
        }
        (loss, grad) = loss_and_grad(&u, config.loss)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        history.records.push(record(epoch, loss, &u, min_norm));
    }
    Ok((u, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::supcl_loss;

    fn small(alpha: f64) -> TrainConfig {
        TrainConfig {
            m: 3,
            n: 3,
            p: 2,
            d: 7,
            loss: LossParams::new(0.3, alpha).unwrap(),
            epochs: 50,
            learning_rate: 0.05,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn initialization_is_deterministic_and_unit_norm() {
        let cfg = small(0.5);
        let a = init_embeddings(&cfg).unwrap();
        let b = init_embeddings(&cfg).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        for norm in a.row_norms() {
            assert!((norm - 1.0).abs() <= 1e-14);
        }
        let other = init_embeddings(&TrainConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.as_slice(), other.as_slice());
    }

    #[test]
    fn loss_part_agrees_with_loss_module() {
        let cfg = small(0.4);
        let u = init_embeddings(&cfg).unwrap();
        for alpha in [0.0, 0.4, 1.0] {
            let params = LossParams::new(0.3, alpha).unwrap();
            let (l, _) = loss_and_grad(&u, params).unwrap();
            let want = supcl_loss(&u, params).unwrap();
            assert!((l - want).abs() < 1e-12, "{alpha}: {l} vs {want}");
        }
    }

    #[test]
    fn history_shape_and_unit_rows() {
        for projection in [Projection::Normalize, Projection::Renormalize] {
            let cfg = TrainConfig { projection, ..small(0.5) };
            let (u, history) = train(&cfg).unwrap();
            assert_eq!(history.records.len(), cfg.epochs + 1);
            assert_eq!(history.records[0].epoch, 0);
            assert!(history.last().unwrap().loss <= history.initial().unwrap().loss);
            for norm in u.row_norms() {
                assert!((norm - 1.0).abs() <= 1e-12);
            }
            let (again, _) = train(&cfg).unwrap();
            assert_eq!(u.as_slice(), again.as_slice());
        }
    }

    #[test]
    fn normalized_gradient_is_tangent_and_scaled() {
        let u = init_embeddings(&small(0.5)).unwrap();
        let (_, mut g) = loss_and_grad(&u, LossParams::new(0.3, 0.5).unwrap()).unwrap();
        let before = g.clone();
        let norms = vec![2.0; u.len()];
        through_normalization(&mut g, u.as_slice(), &norms, u.dim());
        for ((row, g), g0) in u.rows().zip(g.chunks_exact(7)).zip(before.chunks_exact(7)) {
            assert!(linalg::dot(row, g).abs() < 1e-15);
            let radial = linalg::dot(row, g0);
            for k in 0..7 {
                assert!((2.0 * g[k] - (g0[k] - radial * row[k])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small(0.5);
        cfg.epochs = 0;
        assert!(train(&cfg).is_err());
        let mut cfg = small(0.5);
        cfg.n = 1;
        assert!(train(&cfg).is_err());
        cfg.loss.alpha = 1.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut cfg = small(0.5);
        cfg.learning_rate = f64::MAX;
        cfg.epochs = 3;
        match train(&cfg) {
            Err(Error::Diverged { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
