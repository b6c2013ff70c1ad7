//! Geometry of supervised contrastive learning embeddings.
//!
//! This crate models the optimal embedding sets of the combined
//! supervised/self-supervised contrastive loss as a one-parameter family
//! interpolating between two simplex equiangular tight frames (the
//! simplex-to-simplex embedding model, SSEM). It provides
//!
//! - [`geometry`]: simplex ETF and SSEM construction, Gram validation;
//! - [`loss`]: empirical and closed-form contrastive losses;
//! - [`theory`]: the optimal interpolation parameter, collapse thresholds,
//!   predicted variances;
//! - [`metrics`]: within/between-class variance and similarity margins;
//! - [`trainer`]: direct Adam optimization of unit-norm embeddings.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod embedding;
mod error;
mod linalg;

pub mod adam;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod theory;
pub mod trainer;

pub use embedding::{EmbeddingSet, Position, UNIT_NORM_TOL};
pub use error::{Error, Result};
pub use geometry::{build_ssem, gram_check, max_delta, simplex_etf, GramReport, SsemSpec};
pub use loss::{
    cnce_loss, self_loss, ssem_cnce_loss, ssem_supcl_loss, sup_loss, supcl_loss, LossParams,
};
pub use metrics::VarianceReport;
pub use theory::{
    alpha_threshold, collapse_bound, h_fn, predicted_variances, solve_delta_star, tau_threshold,
    CollapseBound, DeltaSolution,
};
pub use trainer::{train, AdamConfig, EpochRecord, Projection, TrainConfig, TrainHistory};
