use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use collapse_core::{
    build_ssem, collapse_bound, gram_check, solve_delta_star, train, SsemSpec, TrainConfig,
};
use collapse_lab::config::{load_train_config, SweepConfig};
use collapse_lab::formats::{embeddings_csv, history_csv, write_json};
use collapse_lab::heatmap::{write_heatmap, HeatmapMode};
use collapse_lab::sweep::{run_sweep_with_progress, summarize};
use collapse_lab::verify::{check_sweep, run_suites, SweepTolerance};
use collapse_lab::{emit_csv, read_sweep_csv, LabError};
use serde_json::{json, Value};

/// Embedding geometry and class collapse in supervised contrastive learning.
#[derive(Debug, Parser)]
#[command(name = "collapse-lab", version)]
struct Cli {
    /// JSON config: a TrainConfig for `train`, a SweepConfig for `sweep`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Parallel sweep workers.
    #[arg(long, global = true, env = "COLLAPSE_LAB_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Shape {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an SSEM set; writes its embeddings and Gram report.
    Build {
        #[command(flatten)]
        shape: Shape,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long)]
        delta: f64,
        /// Ambient dimension, default m·n - 1 (n when m = 1).
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Print the optimal SSEM parameter as JSON.
    SolveDelta {
        #[command(flatten)]
        shape: Shape,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        alpha: f64,
    },
    /// Print collapse thresholds for lists of temperatures and/or alphas.
    Bounds {
        #[command(flatten)]
        shape: Shape,
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
    },
    /// Train one set; writes the history, embeddings and variance report.
    Train {
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run a grid sweep; writes sweep.csv, summary.json and three heatmaps.
    Sweep,
    /// Run the invariant suites, and check a sweep CSV if one is given.
    Verify {
        #[arg(long)]
        sweep_csv: Option<PathBuf>,
        /// Skip the built-in suites.
        #[arg(long)]
        sweep_only: bool,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
    Verification,
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<collapse_core::Error> for Failure {
    fn from(e: collapse_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

/// JSON has no infinity; an unbounded temperature is written as a string.
fn tau_max_value(tau_max: Option<f64>) -> Value {
    match tau_max {
        None => Value::Null,
        Some(t) if t.is_infinite() => json!("inf"),
        Some(t) => json!(t),
    }
}

fn out_dir(cli: &Cli, fallback: &Path) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| fallback.to_path_buf())
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Build { shape, p, delta, dim } => {
            let spec = SsemSpec::new(shape.m, shape.n, *p, *delta)?;
            let dim = dim.unwrap_or(if shape.m == 1 { shape.n } else { shape.m * shape.n - 1 });
            let u = build_ssem(spec, dim)?;
            let report = gram_check(&u, &spec, 1e-10)?;
            let dir = out_dir(cli, Path::new("."));
            let path = dir.join("ssem_embeddings.csv");
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
            std::fs::write(&path, embeddings_csv(&u))
                .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            write_json(&dir.join("gram_report.json"), &report)?;
            print_json(&to_value(&report));
        }
        Command::SolveDelta { shape, tau, alpha } => {
            print_json(&to_value(&solve_delta_star(shape.m, shape.n, *tau, *alpha)?));
        }
        Command::Bounds { shape, tau, alpha } => {
            if tau.is_empty() && alpha.is_empty() {
                return Err(Failure::Usage("bounds needs --tau and/or --alpha".into()));
            }
            let (m, n) = (shape.m, shape.n);
            let mut rows = Vec::new();
            if alpha.is_empty() {
                for &t in tau {
                    let a = collapse_core::alpha_threshold(m, n, t)?;
                    rows.push(json!({ "m": m, "n": n, "tau": t, "alpha_min": a }));
                }
            } else if tau.is_empty() {
                for &a in alpha {
                    // Any temperature works here; only tau_max depends on alpha.
                    let b = collapse_bound(m, n, 1.0, a)?;
                    rows.push(json!({ "m": m, "n": n, "alpha": a, "tau_max": tau_max_value(b.tau_max) }));
                }
            } else {
                for &t in tau {
                    for &a in alpha {
                        let b = collapse_bound(m, n, t, a)?;
                        rows.push(json!({
                            "m": m, "n": n, "tau": t, "alpha": a,
                            "alpha_min": b.alpha_min,
                            "tau_max": tau_max_value(b.tau_max),
                            "collapsed": solve_delta_star(m, n, t, a)?.collapsed,
                        }));
                    }
                }
            }
            print_json(&Value::Array(rows));
        }
        Command::Train { alpha, tau, epochs } => {
            let mut config = match &cli.config {
                Some(path) => load_train_config(path)?,
                None => TrainConfig::default(),
            };
            if let Some(a) = alpha {
                config.loss.alpha = *a;
            }
            if let Some(t) = tau {
                config.loss.tau = *t;
            }
            if let Some(e) = epochs {
                config.epochs = *e;
            }
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            config.validate()?;
            let (u, history) = train(&config).map_err(|e| Failure::Runtime(e.to_string()))?;
            let report = collapse_core::trainer::measure(&u);
            let dir = out_dir(cli, Path::new("."));
            let write = |name: &str, text: String| {
                let path = dir.join(name);
                std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(&path, text))
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
            };
            write("history.csv", history_csv(&history))?;
            write("embeddings.csv", embeddings_csv(&u))?;
            write_json(&dir.join("report.json"), &report)?;
            print_json(&to_value(&report));
        }
        Command::Sweep => {
            let mut config = match &cli.config {
                Some(path) => SweepConfig::load(path)?,
                None => SweepConfig::default(),
            };
            if let Some(s) = cli.seed {
                config.base.seed = s;
            }
            if let Some(w) = cli.workers {
                config.workers = w;
            }
            if let Some(dir) = &cli.out_dir {
                config.output_dir = dir.clone();
            }
            config.validate()?;
            let result = run_sweep_with_progress(&config, |done, total| {
                eprint!("\r{done}/{total} runs");
                if done == total {
                    eprintln!();
                }
            })?;
            let dir = &config.output_dir;
            emit_csv(&result, &dir.join("sweep.csv"))?;
            let summary = summarize(&result);
            write_json(&dir.join("summary.json"), &summary)?;
            for mode in HeatmapMode::ALL {
                let path = dir.join(format!("heatmap_{}.svg", mode.name()));
                write_heatmap(&result, mode, config.base.m, config.base.n, &path)?;
            }
            println!(
                "{} rows ({} failed), mean gap {:.4}, max gap {:.4}; wrote {}",
                summary.rows,
                summary.error_rows,
                summary.mean_abs_gap,
                summary.max_abs_gap,
                dir.display()
            );
        }
        Command::Verify { sweep_csv, sweep_only } => {
            let mut checks = Vec::new();
            if !sweep_only {
                checks.extend(run_suites());
            }
            if let Some(path) = sweep_csv {
                checks.extend(check_sweep(&read_sweep_csv(path)?, SweepTolerance::default()));
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{c}");
            }
            println!("{} checks, {} failed", checks.len(), failed);
            if failed > 0 {
                return Err(Failure::Verification);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(msg) | Failure::Runtime(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(2)
        }
    }
}
