//! Grid sweeps over `(α, τ)`, one training run per cell and repeat.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use collapse_core::{
    predicted_variances, solve_delta_star, ssem_supcl_loss, train, LossParams, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::config::SweepConfig;
use crate::error::Result;

/// One (cell, repeat) outcome. Failed runs keep their theory columns and
/// carry NaN in every measured column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub tau: f64,
    pub seed: u64,
    pub delta_star: f64,
    pub theory_within: f64,
    pub empirical_within: f64,
    pub empirical_between: f64,
    pub final_loss: f64,
    pub closed_form_optimal_loss: f64,
    pub abs_gap: f64,
}

impl SweepRow {
    pub fn is_error(&self) -> bool {
        self.final_loss.is_nan()
    }

    /// Bitwise comparison, so NaN rows compare equal to themselves.
    pub fn same_bits(&self, other: &Self) -> bool {
        let a = self.floats();
        let b = other.floats();
        self.seed == other.seed && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits())
    }

    fn floats(&self) -> [f64; 9] {
        [
            self.alpha,
            self.tau,
            self.delta_star,
            self.theory_within,
            self.empirical_within,
            self.empirical_between,
            self.final_loss,
            self.closed_form_optimal_loss,
            self.abs_gap,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.alpha
                .total_cmp(&b.alpha)
                .then(a.tau.total_cmp(&b.tau))
                .then(a.seed.cmp(&b.seed))
        });
    }

    pub fn same_bits(&self, other: &Self) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| a.same_bits(b))
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `base XOR hash(alpha_index, tau_index, repeat)` with a chained
/// splitmix64 hash.
pub fn cell_seed(base: u64, alpha_index: usize, tau_index: usize, repeat: usize) -> u64 {
    let mut h = splitmix64(alpha_index as u64);
    h = splitmix64(h ^ tau_index as u64);
    h = splitmix64(h ^ repeat as u64);
    base ^ h
}

/// A sweep row plus `|loss(E) - loss(E-1)|` over the last epoch, NaN for
/// failed runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRun {
    pub row: SweepRow,
    pub last_loss_change: f64,
}

/// Solves the theory side and trains one set for a single cell.
pub fn run_cell(base: &TrainConfig, alpha: f64, tau: f64, seed: u64) -> Result<SweepRun> {
    let loss = LossParams::new(tau, alpha)?;
    let (m, n, p) = (base.m, base.n, base.p);
    let solution = solve_delta_star(m, n, tau, alpha)?;
    let (theory_within, _) = predicted_variances(solution.delta_star, m, n)?;
    let optimum = ssem_supcl_loss(solution.delta_tilde_star, m, n, p, loss)?;

    let config = TrainConfig { loss, seed, ..*base };
    let mut row = SweepRow {
        alpha,
        tau,
        seed,
        delta_star: solution.delta_star,
        theory_within,
        empirical_within: f64::NAN,
        empirical_between: f64::NAN,
        final_loss: f64::NAN,
        closed_form_optimal_loss: optimum,
        abs_gap: f64::NAN,
    };
    let mut last_loss_change = f64::NAN;
    match train(&config) {
        Ok((_, history)) => {
            let last = history.last().expect("history holds the initial state");
            if let [.., before, _] = history.records.as_slice() {
                last_loss_change = (last.loss - before.loss).abs();
            }
            row.empirical_within = last.avg_within_var;
            row.empirical_between = last.between_var;
            row.final_loss = last.loss;
            row.abs_gap = (theory_within - last.avg_within_var).abs();
        }
        Err(collapse_core::Error::Diverged { .. }) => {}
        Err(e) => return Err(e.into()),
    }
    Ok(SweepRun { row, last_loss_change })
}

struct Job {
    alpha: f64,
    tau: f64,
    seed: u64,
}

fn jobs(config: &SweepConfig) -> Vec<Job> {
    let mut out = Vec::with_capacity(config.cells() * config.repeats_per_cell);
    for (ai, &alpha) in config.alpha_grid.iter().enumerate() {
        for (ti, &tau) in config.tau_grid.iter().enumerate() {
            for r in 0..config.repeats_per_cell {
                out.push(Job { alpha, tau, seed: cell_seed(config.base.seed, ai, ti, r) });
            }
        }
    }
    out
}

/// Runs every cell on up to `config.workers` threads and returns the rows
/// sorted by `(alpha, tau, seed)`.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with_progress(config, |_, _| {})
}

/// As [`run_sweep`], calling `progress(done, total)` from the collecting
/// thread after each finished run.
pub fn run_sweep_with_progress(
    config: &SweepConfig,
    progress: impl FnMut(usize, usize),
) -> Result<SweepResult> {
    let runs = run_sweep_traced(config, progress)?;
    Ok(SweepResult { rows: runs.into_iter().map(|r| r.row).collect() })
}

/// As [`run_sweep_with_progress`], keeping the per-run convergence trace.
pub fn run_sweep_traced(
    config: &SweepConfig,
    mut progress: impl FnMut(usize, usize),
) -> Result<Vec<SweepRun>> {
    config.validate()?;
    let jobs = jobs(config);
    let total = jobs.len();
    let workers = config.workers.min(total).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Result<SweepRun>>();

    let collected = std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, base) = (&jobs, &next, &config.base);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                if tx.send(run_cell(base, job.alpha, job.tau, job.seed)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut rows = Vec::with_capacity(total);
        let mut first_error = None;
        for outcome in rx {
            match outcome {
                Ok(row) => rows.push(row),
                Err(e) => {
                    // Stop handing out work; the remaining workers drain.
                    next.store(total, Ordering::Relaxed);
                    first_error.get_or_insert(e);
                }
            }
            progress(rows.len(), total);
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(rows),
        }
    })?;

    let mut runs: Vec<SweepRun> = collected;
    runs.sort_by(|a, b| {
        let (a, b) = (&a.row, &b.row);
        a.alpha.total_cmp(&b.alpha).then(a.tau.total_cmp(&b.tau)).then(a.seed.cmp(&b.seed))
    });
    Ok(runs)
}

/// Aggregate over the repeats of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub alpha: f64,
    pub tau: f64,
    pub runs: usize,
    pub failed: usize,
    pub theory_within: f64,
    pub mean_empirical_within: f64,
    /// Sample standard deviation over successful repeats; 0 for one run.
    pub std_empirical_within: f64,
    pub mean_abs_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub error_rows: usize,
    /// Mean of `abs_gap` over successful rows.
    pub mean_abs_gap: f64,
    pub max_abs_gap: f64,
    pub cells: Vec<CellSummary>,
}

pub fn summarize(result: &SweepResult) -> SweepSummary {
    let mut cells: Vec<CellSummary> = Vec::new();
    let mut groups: Vec<Vec<&SweepRow>> = Vec::new();
    for row in &result.rows {
        match cells.iter().position(|c| c.alpha == row.alpha && c.tau == row.tau) {
            Some(k) => groups[k].push(row),
            None => {
                cells.push(CellSummary {
                    alpha: row.alpha,
                    tau: row.tau,
                    runs: 0,
                    failed: 0,
                    theory_within: row.theory_within,
                    mean_empirical_within: f64::NAN,
                    std_empirical_within: f64::NAN,
                    mean_abs_gap: f64::NAN,
                });
                groups.push(vec![row]);
            }
        }
    }
    for (cell, rows) in cells.iter_mut().zip(&groups) {
        let ok: Vec<&&SweepRow> = rows.iter().filter(|r| !r.is_error()).collect();
        cell.runs = rows.len();
        cell.failed = rows.len() - ok.len();
        if ok.is_empty() {
            continue;
        }
        let k = ok.len() as f64;
        let mean = ok.iter().map(|r| r.empirical_within).sum::<f64>() / k;
        let var = if ok.len() > 1 {
            ok.iter().map(|r| (r.empirical_within - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        cell.mean_empirical_within = mean;
        cell.std_empirical_within = var.sqrt();
        cell.mean_abs_gap = ok.iter().map(|r| r.abs_gap).sum::<f64>() / k;
    }

    let ok: Vec<&SweepRow> = result.rows.iter().filter(|r| !r.is_error()).collect();
    let mean_abs_gap = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().map(|r| r.abs_gap).sum::<f64>() / ok.len() as f64
    };
    SweepSummary {
        rows: result.rows.len(),
        error_rows: result.rows.len() - ok.len(),
        mean_abs_gap,
        max_abs_gap: ok.iter().map(|r| r.abs_gap).fold(f64::NAN, f64::max),
        cells,
    }
}
