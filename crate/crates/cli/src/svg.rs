//! Standalone SVG line charts for solver traces.

use std::fmt::Write as _;
use std::path::Path;

use bayesagg_core::Trace;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("cannot plot an empty trace")]
    EmptyTrace,
    #[error("trace has no probes to plot")]
    NoProbes,
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
/// Floor applied before taking logs of residuals.
const LOG_FLOOR: f64 = 1e-17;

const PALETTE: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn render(series: &[Series], x_label: &str, y_label: &str, y_tick: impl Fn(f64) -> String) -> String {
    let (x0, x1) = {
        let (lo, hi) = series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi > lo { (lo, hi) } else { (lo, lo + 1.0) }
    };
    let (y0, y1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for j in 0..=TICKS {
        let f = j as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{tx:.2}" y1="{:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            format_tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{LEFT}" y2="{ty:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            ty + 4.0,
            y_tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{y_label}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = TOP + 10.0 + 18.0 * idx as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}

fn format_tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e5).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Probe trajectories against `t`, legend `player<i>/type<k>` (1-based).
pub fn convergence_svg(trace: &Trace) -> Result<String, SvgError> {
    if trace.records.is_empty() {
        return Err(SvgError::EmptyTrace);
    }
    if trace.probes.is_empty() {
        return Err(SvgError::NoProbes);
    }
    let series: Vec<Series> = trace
        .probes
        .iter()
        .enumerate()
        .map(|(j, (i, k))| Series {
            label: format!("player{}/type{}", i + 1, k + 1),
            points: trace.records.iter().map(|r| (r.t as f64, r.probes[j])).collect(),
        })
        .collect();
    Ok(render(&series, "t", "strategy value", format_tick))
}

/// Consensus residual against `t` on a log10 axis.
pub fn consensus_svg(trace: &Trace) -> Result<String, SvgError> {
    if trace.records.is_empty() {
        return Err(SvgError::EmptyTrace);
    }
    let mut series = vec![Series {
        label: "consensus residual".into(),
        points: trace.records.iter().map(|r| (r.t as f64, r.consensus_residual.max(LOG_FLOOR).log10())).collect(),
    }];
    if trace.records.iter().all(|r| r.oracle_distance.is_some()) {
        series.push(Series {
            label: "oracle distance".into(),
            points: trace
                .records
                .iter()
                .map(|r| (r.t as f64, r.oracle_distance.unwrap_or(0.0).max(LOG_FLOOR).log10()))
                .collect(),
        });
    }
    Ok(render(&series, "t", "log10 residual", |y| format!("1e{y:.1}")))
}

pub fn write_file(path: &Path, content: &str) -> Result<(), SvgError> {
    std::fs::write(path, content).map_err(|source| SvgError::Io { path: path.display().to_string(), source })
}

/// Writes the probe chart of `trace` to `path`.
pub fn emit_svg(trace: &Trace, path: &Path) -> Result<(), SvgError> {
    write_file(path, &convergence_svg(trace)?)
}
