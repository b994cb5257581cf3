use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::discrete::DiscreteRun;
use crate::dynamics::{TheoremReport, Trajectory};

pub const TRAJECTORY_HEADER: &str = "t,V_ex,V_ey,V_xbar,err_zp,bound,gamma";
pub const DISCRETE_HEADER: &str = "k,gamma,gap_p,V_ex,V_ey";

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per sample. `err_zp` is `max_p ‖z_p(T) - x*‖²`; at `t0` it is the
/// spread of the start state and the bound is infinite.
pub fn trajectory_csv(traj: &Trajectory, theorem: &TheoremReport, start_err: f64) -> String {
    let mut out = String::with_capacity(128 * (traj.samples().len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    let first = traj.first();
    let rows = std::iter::once((first.t, start_err, f64::INFINITY))
        .chain(theorem.rows.iter().map(|r| (r.t, r.err, r.bound)));
    for (s, (t, err, bound)) in traj.samples().iter().zip(rows) {
        debug_assert_eq!(s.t, t);
        let v = &s.lyapunov;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(t),
            num(v.v_ex),
            num(v.v_ey),
            num(v.v_xbar),
            num(err),
            num(bound),
            num(traj.gamma().at(t))
        );
    }
    out
}

/// Rows for the `slot`-th tracked node.
pub fn discrete_csv(run: &DiscreteRun, slot: usize) -> String {
    let mut out = String::with_capacity(96 * (run.records.len() + 1));
    out.push_str(DISCRETE_HEADER);
    out.push('\n');
    for r in &run.records {
        let _ = writeln!(out, "{},{},{},{},{}", r.k, num(r.gamma), num(r.gaps[slot]), num(r.v_ex), num(r.v_ey));
    }
    out
}

pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

/// A log-log line chart rendered as a standalone SVG document.
pub struct LogLogPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 1500;

fn decades(lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (lo.log10().floor(), hi.log10().ceil());
    if a == b {
        (a - 1.0, b + 1.0)
    } else {
        (a, b)
    }
}

/// Keeps points whose `log10 x` advances by a fixed step, plus the last one.
fn thin(points: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let step = (hi - lo) / MAX_POINTS as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut next = f64::NEG_INFINITY;
    for &(x, y) in points {
        let lx = x.log10();
        if lx >= next {
            out.push((x, y));
            next = lx + step;
        }
    }
    if let (Some(&last), Some(kept)) = (points.last(), out.last()) {
        if *kept != last {
            out.push(last);
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LogLogPlot {
    pub fn render(&self) -> String {
        let usable = |&(x, y): &(f64, f64)| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite();
        let series: Vec<(&Series, Vec<(f64, f64)>)> = self
            .series
            .iter()
            .map(|s| (s, s.points.iter().copied().filter(usable).collect::<Vec<_>>()))
            .filter(|(_, p)| !p.is_empty())
            .collect();
        let all = series.iter().flat_map(|(_, p)| p.iter());
        let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
        for &(x, y) in all {
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
        if series.is_empty() {
            (x_lo, x_hi, y_lo, y_hi) = (1.0, 10.0, 1.0, 10.0);
        }
        let (xa, xb) = decades(x_lo, x_hi);
        let (ya, yb) = decades(y_lo, y_hi);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (x.log10() - xa) / (xb - xa) * pw;
        let py = |y: f64| TOP + (yb - y.log10()) / (yb - ya) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        for e in (xa as i32)..=(xb as i32) {
            let x = LEFT + (e as f64 - xa) / (xb - xa) * pw;
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"##,
                TOP + ph,
                TOP + ph + 18.0
            );
        }
        for e in (ya as i32)..=(yb as i32) {
            let y = TOP + (yb - e as f64) / (yb - ya) * ph;
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate(22 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, (s, pts)) in series.iter().enumerate() {
            let pts = thin(pts, xa, xb);
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                s.color,
                coords.join(" ")
            );
            let ly = TOP + 10.0 + 20.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 24.0,
                s.color,
                lx + 30.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Error, bound and Lyapunov values against time.
pub fn continuous_plot(traj: &Trajectory, theorem: &TheoremReport) -> LogLogPlot {
    let lyap = |f: fn(&crate::decomposition::LyapunovSample) -> f64| {
        traj.samples().iter().map(|s| (s.t, f(&s.lyapunov))).collect()
    };
    LogLogPlot {
        title: "Continuous DCG".into(),
        x_label: "t".into(),
        y_label: "value".into(),
        series: vec![
            Series {
                name: "max_p ‖z_p − x*‖²".into(),
                color: "#1f77b4",
                dashed: false,
                points: theorem.rows.iter().map(|r| (r.t, r.err)).collect(),
            },
            Series {
                name: "bound".into(),
                color: "#d62728",
                dashed: true,
                points: theorem.rows.iter().map(|r| (r.t, r.bound)).collect(),
            },
            Series { name: "V(eˣ)".into(), color: "#2ca02c", dashed: false, points: lyap(|v| v.v_ex) },
            Series { name: "V(eʸ)".into(), color: "#9467bd", dashed: false, points: lyap(|v| v.v_ey) },
        ],
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Optimality gaps against the iteration count.
pub fn discrete_plot(run: &DiscreteRun) -> LogLogPlot {
    let k = |r: &crate::discrete::DiscreteRecord| r.k as f64;
    let mut series = vec![Series {
        name: "mean gap".into(),
        color: "black",
        dashed: true,
        points: run.records.iter().map(|r| (k(r), r.mean_gap)).collect(),
    }];
    for (slot, &p) in run.tracked.iter().enumerate().take(PALETTE.len()) {
        series.push(Series {
            name: format!("node {p}"),
            color: PALETTE[slot],
            dashed: false,
            points: run.records.iter().map(|r| (k(r), r.gaps[slot])).collect(),
        });
    }
    LogLogPlot { title: "Discrete DCG".into(), x_label: "k".into(), y_label: "‖z_p(k) − x*‖".into(), series }
}

pub fn write(dir: &Path, name: &str, contents: &str) -> std::io::Result<std::path::PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}
