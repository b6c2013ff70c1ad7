//! Fast invariant suites behind the `verify` subcommand.

use collapse_core::metrics::{
    centroid, instance_mean_spread, similarity_margin, variance_identity_check, variance_report,
};
use collapse_core::theory::{lemma_delta, LemmaOracle};
use collapse_core::trainer::loss_and_grad;
use collapse_core::{
    alpha_threshold, build_ssem, cnce_loss, gram_check, max_delta, predicted_variances,
    solve_delta_star, ssem_cnce_loss, ssem_supcl_loss, supcl_loss, tau_threshold, EmbeddingSet,
    LossParams, SsemSpec,
};

use crate::sweep::{splitmix64, SweepResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Uniform draws in `[0, 1)` from a splitmix64 stream.
struct Uniform(u64);

impl Uniform {
    fn next(&mut self) -> f64 {
        self.0 = splitmix64(self.0);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn normal(&mut self) -> f64 {
        let u = 1.0 - self.next();
        let v = self.next();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }

    fn unit_set(&mut self, m: usize, n: usize, p: usize, d: usize) -> EmbeddingSet {
        let data = (0..m * n * p * d).map(|_| self.normal()).collect();
        EmbeddingSet::normalized(m, n, p, d, data).expect("nonzero rows")
    }
}

fn ssem(m: usize, n: usize, p: usize, delta: f64) -> EmbeddingSet {
    build_ssem(SsemSpec::new(m, n, p, delta).expect("admissible"), m * n - 1).expect("dim")
}

fn construction() -> Check {
    let mut worst = 0.0f64;
    for &(m, n, p) in &[(2, 2, 1), (2, 2, 2), (3, 4, 2), (10, 10, 2)] {
        let top = max_delta(m, n).expect("n >= 2");
        for k in 0..25 {
            let spec = SsemSpec::new(m, n, p, top * k as f64 / 24.0).expect("admissible");
            let u = build_ssem(spec, m * n - 1).expect("dim");
            let report = gram_check(&u, &spec, 1e-10).expect("shape");
            let c = centroid(&u);
            let c = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(report.max_abs_residual).max(c);
        }
    }
    Check::new("ssem construction", worst <= 1e-10, format!("max residual {worst:.2e}"))
}

fn closed_form(rng: &mut Uniform) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = 2 + (rng.next() * 5.0) as usize;
        let n = 2 + (rng.next() * 5.0) as usize;
        let p = 1 + (rng.next() * 3.0) as usize;
        let delta = rng.next() * max_delta(m, n).expect("n >= 2");
        let params = LossParams::new(0.05 + 2.0 * rng.next(), rng.next()).expect("valid");
        let spec = SsemSpec::new(m, n, p, delta).expect("admissible");
        let u = build_ssem(spec, m * n - 1).expect("dim");
        let emp = supcl_loss(&u, params).expect("valid");
        let closed = ssem_supcl_loss(spec.delta_tilde(), m, n, p, params).expect("valid");
        worst = worst.max((emp - closed).abs() / closed.abs());
    }
    Check::new("closed-form loss", worst <= 1e-8, format!("max relative error {worst:.2e}"))
}

/// Compares the gradient with central differences of the loss along great
/// circles, which never leave the sphere.
fn gradient(rng: &mut Uniform) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let params = LossParams::new(0.1 + 0.9 * rng.next(), rng.next()).expect("valid");
        let u = rng.unit_set(3, 3, 2, 7);
        let (_, grad) = loss_and_grad(&u, params).expect("unit rows");
        let d = u.dim();
        let mut dir: Vec<f64> = (0..u.as_slice().len()).map(|_| rng.normal()).collect();
        for (v, row) in dir.chunks_exact_mut(d).zip(u.rows()) {
            let along: f64 = v.iter().zip(row).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(row).for_each(|(a, b)| *a -= along * b);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
        }
        let moved = |eps: f64| {
            let data = u.as_slice().iter().zip(&dir).map(|(x, v)| eps.cos() * x + eps.sin() * v).collect();
            let w = EmbeddingSet::normalized(3, 3, 2, d, data).expect("nonzero");
            supcl_loss(&w, params).expect("valid")
        };
        let h = 1e-5;
        let fd = (moved(h) - moved(-h)) / (2.0 * h);
        let exact: f64 = grad.iter().zip(&dir).map(|(g, v)| g * v).sum();
        worst = worst.max((fd - exact).abs() / exact.abs().max(1e-3));
    }
    Check::new("loss gradient", worst <= 1e-5, format!("max relative error {worst:.2e}"))
}

fn solver() -> Check {
    let (m, n, p) = (10, 10, 2);
    let x_max = 100.0 / 99.0;
    let steps = 100_000;
    let step = x_max / steps as f64;
    let (mut worst_step, mut worst_res) = (0.0f64, 0.0f64);
    for ai in 1..=9 {
        for ti in 1..=9 {
            let (alpha, tau) = (ai as f64 / 10.0, ti as f64 / 10.0);
            let params = LossParams::new(tau, alpha).expect("valid");
            let argmin = (0..=steps)
                .map(|k| k as f64 * step)
                .map(|x| (ssem_supcl_loss(x, m, n, p, params).expect("in range"), x))
                .fold((f64::INFINITY, 0.0), |best, c| if c.0 < best.0 { c } else { best })
                .1;
            let sol = solve_delta_star(m, n, tau, alpha).expect("valid");
            worst_step = worst_step.max((sol.delta_tilde_star - argmin).abs() / step);
            if !sol.collapsed {
                worst_res = worst_res.max(sol.h_residual.abs());
            }
        }
    }
    Check::new(
        "delta solver",
        worst_step <= 1.0 && worst_res <= 1e-12,
        format!("max offset {worst_step:.2} grid steps, max residual {worst_res:.2e}"),
    )
}

fn thresholds() -> Check {
    let a5 = alpha_threshold(10, 1_000_000, 0.5).expect("valid");
    let a9 = alpha_threshold(10, 1_000_000, 0.9).expect("valid");
    let cold = alpha_threshold(10, 10, 1e-3).expect("valid");
    let mut round_trip = 0.0f64;
    for k in 1..=20 {
        let tau = 0.05 * k as f64;
        let back = tau_threshold(10, 10, alpha_threshold(10, 10, tau).expect("valid")).expect("valid");
        round_trip = round_trip.max((back - tau).abs());
    }
    let ok = (a5 - 0.549).abs() <= 1e-3
        && (a9 - 0.804).abs() <= 1e-3
        && (cold - 0.1).abs() <= 1e-6
        && round_trip <= 1e-9;
    Check::new(
        "collapse thresholds",
        ok,
        format!("alpha(0.5) = {a5:.4}, alpha(0.9) = {a9:.4}, cold limit {cold:.7}, round trip {round_trip:.1e}"),
    )
}

fn variances(rng: &mut Uniform) -> Check {
    let mut formula = 0.0f64;
    let top = max_delta(10, 10).expect("n >= 2");
    for k in 0..50 {
        let delta = top * k as f64 / 49.0;
        let r = variance_report(&ssem(10, 10, 2, delta));
        let (w, b) = predicted_variances(delta, 10, 10).expect("in range");
        formula = formula.max((r.avg_within - w).abs()).max((r.between - b).abs());
    }
    let bound = (0..100).all(|_| variance_identity_check(&rng.unit_set(3, 4, 2, 6), 1e-12));
    Check::new(
        "variance laws",
        formula <= 1e-10 && bound,
        format!("formula error {formula:.2e}, bound on random sets {}", if bound { "holds" } else { "violated" }),
    )
}

fn ordering() -> Check {
    let mut ok = true;
    for &(m, n) in &[(2, 2), (10, 10)] {
        for k in 0..=20 {
            ok &= similarity_margin(&ssem(m, n, 1, k as f64 / 20.0)).expect("m >= 2") >= -1e-12;
        }
        ok &= similarity_margin(&ssem(m, n, 1, max_delta(m, n).expect("n >= 2"))).expect("m >= 2") < 0.0;
    }
    Check::new("similarity ordering", ok, "margins checked on 42 sets".into())
}

fn cnce() -> Check {
    let (m, n, p, tau) = (10, 10, 2, 0.2);
    let top = max_delta(m, n).expect("n >= 2");
    let x_max = n as f64 / (n - 1) as f64;
    let steps = 100_000;
    let last = ssem_cnce_loss(x_max, n, p, tau).expect("in range");
    let grid_ok = (0..steps).all(|k| ssem_cnce_loss(x_max * k as f64 / steps as f64, n, p, tau).expect("in range") > last);
    let best = cnce_loss(&ssem(m, n, p, top), tau).expect("unit rows");
    let interior_ok = (1..=50).all(|k| best <= cnce_loss(&ssem(m, n, p, top * k as f64 / 51.0), tau).expect("unit rows"));
    Check::new("cnce optimum", grid_ok && interior_ok, format!("loss at max delta {best:.6}"))
}

fn lemmas() -> Check {
    let mut worst = 0.0f64;
    let mut ends = true;
    for &(m, n) in &[(2, 2), (3, 4), (10, 10)] {
        let top = max_delta(m, n).expect("n >= 2");
        for k in 0..=20 {
            let delta = top * k as f64 / 20.0;
            let c = instance_mean_spread(&ssem(m, n, 2, delta));
            worst = worst.max((lemma_delta(c, m, n, LemmaOracle::MeanSpread).expect("in range") - delta).abs());
        }
        let mn = (m * n) as f64;
        ends &= (lemma_delta(-mn, m, n, LemmaOracle::MeanProducts).expect("in range") - top).abs() <= 1e-15;
        ends &= lemma_delta(mn * (n as f64 - 1.0), m, n, LemmaOracle::MeanProducts).expect("in range") == 0.0;
    }
    Check::new("lemma oracles", worst <= 1e-9 && ends, format!("round-trip error {worst:.2e}"))
}

/// Runs every built-in suite.
pub fn run_suites() -> Vec<Check> {
    let mut rng = Uniform(0x5eed);
    vec![
        construction(),
        closed_form(&mut rng),
        gradient(&mut rng),
        solver(),
        thresholds(),
        variances(&mut rng),
        ordering(),
        cnce(),
        lemmas(),
    ]
}

/// Agreement tolerances for a finished sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepTolerance {
    pub mean_gap: f64,
    pub cell_gap: f64,
    pub collapse: f64,
}

impl Default for SweepTolerance {
    fn default() -> Self {
        Self { mean_gap: 0.05, cell_gap: 0.10, collapse: 1e-3 }
    }
}

/// Checks a sweep against the theory: mean and worst gap, failed runs, and
/// collapse in every `α = 0` cell.
pub fn check_sweep(result: &SweepResult, tol: SweepTolerance) -> Vec<Check> {
    let summary = crate::sweep::summarize(result);
    let mut out = vec![
        Check::new(
            "sweep runs",
            summary.error_rows == 0 && summary.rows > 0,
            format!("{} rows, {} failed", summary.rows, summary.error_rows),
        ),
        Check::new(
            "sweep mean gap",
            summary.mean_abs_gap <= tol.mean_gap,
            format!("{:.4} (limit {})", summary.mean_abs_gap, tol.mean_gap),
        ),
        Check::new(
            "sweep cell gap",
            summary.max_abs_gap <= tol.cell_gap,
            format!("{:.4} (limit {})", summary.max_abs_gap, tol.cell_gap),
        ),
    ];
    let zero: Vec<f64> = result.rows.iter().filter(|r| r.alpha == 0.0).map(|r| r.empirical_within).collect();
    if !zero.is_empty() {
        let worst = zero.iter().copied().fold(0.0, f64::max);
        out.push(Check::new(
            "sweep collapse at alpha 0",
            zero.iter().all(|&v| v < tol.collapse),
            format!("max within-variance {worst:.2e} (limit {:e})", tol.collapse),
        ));
    }
    out
}
