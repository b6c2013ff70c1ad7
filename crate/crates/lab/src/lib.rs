//! Sweeps, file formats and figures for `collapse-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod heatmap;
pub mod sweep;
pub mod verify;

pub use config::SweepConfig;
pub use error::{LabError, Result};
pub use formats::{emit_csv, parse_sweep_csv, read_sweep_csv};
pub use heatmap::{render_heatmap, write_heatmap, HeatmapMode};
pub use sweep::{run_sweep, run_sweep_traced, summarize, SweepResult, SweepRow, SweepRun, SweepSummary};
