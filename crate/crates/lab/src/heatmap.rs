//! Self-contained SVG heatmaps of a sweep over the `(α, τ)` grid.

use std::fmt::Write as _;
use std::path::Path;

use collapse_core::alpha_threshold;

use crate::error::{write_file, LabError, Result};
use crate::sweep::SweepResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMode {
    Theory,
    Empirical,
    Gap,
}

impl HeatmapMode {
    pub const ALL: [HeatmapMode; 3] = [Self::Theory, Self::Empirical, Self::Gap];

    pub fn name(self) -> &'static str {
        match self {
            Self::Theory => "theory",
            Self::Empirical => "empirical",
            Self::Gap => "gap",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Self::Theory => "Predicted within-class variance",
            Self::Empirical => "Measured within-class variance",
            Self::Gap => "|measured - predicted| within-class variance",
        }
    }
}

const CELL_W: f64 = 28.0;
const CELL_H: f64 = 20.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const LEGEND_GAP: f64 = 24.0;
const LEGEND_W: f64 = 16.0;
const RIGHT: f64 = 72.0;
const MISSING: &str = "#bdbdbd";

/// Per-cell means over repeats, `values[tau_index][alpha_index]`.
struct Grid {
    alphas: Vec<f64>,
    taus: Vec<f64>,
    theory: Vec<Vec<f64>>,
    empirical: Vec<Vec<f64>>,
    gap: Vec<Vec<f64>>,
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn mean_finite(values: &[f64]) -> f64 {
    let ok: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().sum::<f64>() / ok.len() as f64
    }
}

fn grid(result: &SweepResult) -> Result<Grid> {
    if result.rows.is_empty() {
        return Err(LabError::Heatmap("empty sweep".into()));
    }
    let alphas = distinct(result.rows.iter().map(|r| r.alpha).collect());
    let taus = distinct(result.rows.iter().map(|r| r.tau).collect());
    let (na, nt) = (alphas.len(), taus.len());
    let mut buckets: Vec<Vec<[f64; 3]>> = vec![Vec::new(); na * nt];
    for r in &result.rows {
        let a = alphas.iter().position(|&x| x == r.alpha).expect("alpha listed");
        let t = taus.iter().position(|&x| x == r.tau).expect("tau listed");
        buckets[t * na + a].push([r.theory_within, r.empirical_within, r.abs_gap]);
    }
    if let Some(k) = buckets.iter().position(Vec::is_empty) {
        return Err(LabError::Heatmap(format!(
            "grid is not rectangular: no row for alpha = {}, tau = {}",
            alphas[k % na],
            taus[k / na]
        )));
    }
    let field = |c: usize| -> Vec<Vec<f64>> {
        (0..nt)
            .map(|t| {
                (0..na)
                    .map(|a| mean_finite(&buckets[t * na + a].iter().map(|v| v[c]).collect::<Vec<_>>()))
                    .collect()
            })
            .collect()
    };
    Ok(Grid { theory: field(0), empirical: field(1), gap: field(2), alphas, taus })
}

/// White to dark blue, linear in `t ∈ [0, 1]`.
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

fn fmt_tick(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string().replace("-0", "0")
}

fn fmax(values: &[Vec<f64>]) -> f64 {
    values.iter().flatten().copied().filter(|x| !x.is_nan()).fold(0.0, f64::max)
}

/// Horizontal position of `alpha`, interpolating between column centres.
fn alpha_x(alphas: &[f64], alpha: f64) -> Option<f64> {
    let centre = |k: usize| LEFT + (k as f64 + 0.5) * CELL_W;
    let k = alphas.windows(2).position(|w| alpha >= w[0] && alpha <= w[1])?;
    let frac = (alpha - alphas[k]) / (alphas[k + 1] - alphas[k]);
    Some(centre(k) + frac * CELL_W)
}

/// Renders one heatmap. `classes` and `instances` size the collapse
/// boundary drawn in theory mode.
pub fn render_heatmap(
    result: &SweepResult,
    mode: HeatmapMode,
    classes: usize,
    instances: usize,
) -> Result<String> {
    let g = grid(result)?;
    let (na, nt) = (g.alphas.len(), g.taus.len());
    let values = match mode {
        HeatmapMode::Theory => &g.theory,
        HeatmapMode::Empirical => &g.empirical,
        HeatmapMode::Gap => &g.gap,
    };
    // Theory and measurement share one scale so the two maps compare directly.
    let top = match mode {
        HeatmapMode::Gap => fmax(&g.gap),
        _ => fmax(&g.theory).max(fmax(&g.empirical)),
    };
    let scale = if top > 0.0 { top } else { 1.0 };

    let plot_w = na as f64 * CELL_W;
    let plot_h = nt as f64 * CELL_H;
    let width = LEFT + plot_w + LEGEND_GAP + LEGEND_W + RIGHT;
    let height = TOP + plot_h + BOTTOM;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        LEFT + plot_w / 2.0,
        mode.title()
    );

    for (t, row) in values.iter().enumerate() {
        let y = TOP + (nt - 1 - t) as f64 * CELL_H;
        for (a, &v) in row.iter().enumerate() {
            let x = LEFT + a as f64 * CELL_W;
            let fill = if v.is_nan() { MISSING.to_string() } else { ramp(v / scale) };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}"><title>alpha={} tau={}: {v:.6}</title></rect>"#,
                g.alphas[a], g.taus[t]
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for (a, &alpha) in g.alphas.iter().enumerate() {
        let x = LEFT + (a as f64 + 0.5) * CELL_W;
        let y = TOP + plot_h + 14.0;
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="middle" font-size="8">{}</text>"#, fmt_tick(alpha));
    }
    for (t, &tau) in g.taus.iter().enumerate() {
        let y = TOP + (nt - 1 - t) as f64 * CELL_H + CELL_H / 2.0 + 3.0;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" font-size="8">{}</text>"#, LEFT - 4.0, fmt_tick(tau));
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">α (loss-combining coefficient)</text>"#,
        LEFT + plot_w / 2.0,
        TOP + plot_h + 38.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {y})">τ (temperature)</text>"#,
        y = TOP + plot_h / 2.0
    );

    if mode == HeatmapMode::Theory && na >= 2 {
        let mut points = Vec::new();
        for (t, &tau) in g.taus.iter().enumerate() {
            let Ok(alpha) = alpha_threshold(classes, instances, tau) else { continue };
            if let Some(x) = alpha_x(&g.alphas, alpha) {
                let y = TOP + (nt - 1 - t) as f64 * CELL_H + CELL_H / 2.0;
                points.push(format!("{x:.2},{y:.2}"));
            }
        }
        if points.len() >= 2 {
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2" stroke-dasharray="6 4"><title>collapse boundary</title></polyline>"##,
                points.join(" ")
            );
        }
    }

    let lx = LEFT + plot_w + LEGEND_GAP;
    let steps = 64;
    let step_h = plot_h / steps as f64;
    for k in 0..steps {
        let y = TOP + plot_h - (k + 1) as f64 * step_h;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{y:.3}" width="{LEGEND_W}" height="{:.3}" fill="{}"/>"#,
            step_h + 0.2,
            ramp((k as f64 + 0.5) / steps as f64)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{lx}" y="{TOP}" width="{LEGEND_W}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let tx = lx + LEGEND_W + 4.0;
    let _ = writeln!(s, r#"<text x="{tx}" y="{}">max {top:.4}</text>"#, TOP + 8.0);
    let _ = writeln!(s, r#"<text x="{tx}" y="{}">min 0</text>"#, TOP + plot_h);
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_heatmap(
    result: &SweepResult,
    mode: HeatmapMode,
    classes: usize,
    instances: usize,
    path: &Path,
) -> Result<()> {
    write_file(path, &render_heatmap(result, mode, classes, instances)?)
}
