//! Self-contained SVG reports from the CSV artifacts: belief depth over
//! time with probability-sized markers, top-down trajectories with goal
//! circles, command traces with the repulsive-force overlay, and a
//! compute-time histogram.

use crate::grid::{GridSpec, StateIndex};
use crate::logs;
use crate::sim::{Primitive, Scene};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: unrecognized CSV schema {header:?}")]
    SchemaMismatch { path: String, header: String },
    #[error("{path}: bad number {field:?}")]
    BadNumber { path: String, field: String },
    #[error("belief.csv needs --config to map states onto depths")]
    NeedsConfig,
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

struct Frame {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        let pad = |lo: f64, hi: f64| {
            if (hi - lo).abs() < 1e-12 {
                (lo - 1.0, hi + 1.0)
            } else {
                (lo, hi)
            }
        };
        let (xmin, xmax) = pad(xmin, xmax);
        let (ymin, ymax) = pad(ymin, ymax);
        Self {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.xmin) / (self.xmax - self.xmin) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT
            - MARGIN_B
            - (y - self.ymin) / (self.ymax - self.ymin) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" font-family=\"sans-serif\">{title}</text>\n",
        WIDTH / 2.0
    )
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, y0) = (MARGIN_L, HEIGHT - MARGIN_B);
    let (x1, y1) = (WIDTH - MARGIN_R, MARGIN_T);
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">{xlabel}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\" transform=\"rotate(-90 18 {})\">{ylabel}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (v, at_x) in [(f.xmin, x0), (f.xmax, x1)] {
        let _ = writeln!(
            s,
            "<text x=\"{at_x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">{v:.2}</text>",
            y0 + 16.0
        );
    }
    for (v, at_y) in [(f.ymin, y0), (f.ymax, y1)] {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">{v:.2}</text>",
            x0 - 6.0,
            at_y + 4.0
        );
    }
}

fn polyline(s: &mut String, points: &[(f64, f64)], color: &str, width: f64) {
    if points.is_empty() {
        return;
    }
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>",
        coords.join(" ")
    );
}

fn parse_f64(path: &Path, field: &str) -> Result<f64, PlotError> {
    field.parse().map_err(|_| PlotError::BadNumber {
        path: path.display().to_string(),
        field: field.to_string(),
    })
}

/// Belief depth over frames from the sparse belief export; marker radius is
/// proportional to the probability mass at that depth bin.
pub fn belief_depth_svg(path: &Path, spec: &GridSpec) -> Result<String, PlotError> {
    let (header, rows) = logs::read_csv(path)?;
    if header != logs::BELIEF_HEADER {
        return Err(PlotError::SchemaMismatch {
            path: path.display().to_string(),
            header,
        });
    }
    // Aggregate probability per (frame, depth bin).
    let mut mass: BTreeMap<(u64, usize), f64> = BTreeMap::new();
    let mut max_frame = 0u64;
    for row in &rows {
        if row.len() != 3 {
            continue;
        }
        let frame: u64 = parse_f64(path, &row[0])? as u64;
        let state: usize = parse_f64(path, &row[1])? as usize;
        let prob = parse_f64(path, &row[2])?;
        max_frame = max_frame.max(frame);
        if state < spec.voxel_count() {
            if let StateIndex::InGrid { k, .. } = StateIndex::from_linear(spec, state) {
                *mass.entry((frame, k)).or_insert(0.0) += prob;
            }
        }
    }
    let frame = Frame::new(0.0, max_frame as f64, 0.0, spec.max_depth);
    let mut s = svg_open("Belief mass by depth over time");
    axes(&mut s, &frame, "frame", "depth [m]");
    for (&(fr, k), &p) in &mass {
        let depth = (k as f64 + 0.5) * spec.k_d;
        let r = (9.0 * p).clamp(0.4, 9.0);
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"steelblue\" fill-opacity=\"0.6\"/>",
            frame.px(fr as f64),
            frame.py(depth),
            r
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Mode-state depth per frame (marker size by mode belief) with the
/// closest-raw-point depth overlaid as a gray line.
pub fn mode_depth_svg(path: &Path) -> Result<String, PlotError> {
    let (header, rows) = logs::read_csv(path)?;
    if header != logs::MODES_HEADER {
        return Err(PlotError::SchemaMismatch {
            path: path.display().to_string(),
            header,
        });
    }
    let mut modes = Vec::new();
    let mut raw = Vec::new();
    let mut max_frame = 0.0f64;
    let mut max_depth = 0.0f64;
    for row in &rows {
        if row.len() != 7 {
            continue;
        }
        let fr = parse_f64(path, &row[0])?;
        let depth = parse_f64(path, &row[4])?;
        let belief = parse_f64(path, &row[5])?;
        max_frame = max_frame.max(fr);
        if depth >= 0.0 {
            modes.push((fr, depth, belief));
            max_depth = max_depth.max(depth);
        }
        if !row[6].is_empty() {
            let d = parse_f64(path, &row[6])?;
            raw.push((fr, d));
            max_depth = max_depth.max(d);
        }
    }
    let frame = Frame::new(0.0, max_frame, 0.0, max_depth.max(0.1));
    let mut s = svg_open("Most probable voxel depth over time");
    axes(&mut s, &frame, "frame", "depth [m]");
    let raw_px: Vec<(f64, f64)> = raw
        .iter()
        .map(|&(f0, d)| (frame.px(f0), frame.py(d)))
        .collect();
    polyline(&mut s, &raw_px, "gray", 1.0);
    for &(fr, depth, belief) in &modes {
        let r = (8.0 * belief).clamp(0.6, 8.0);
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"crimson\" fill-opacity=\"0.7\"/>",
            frame.px(fr),
            frame.py(depth),
            r
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Top-down (x, y) trajectory; goal regions and obstacles drawn when the
/// scene is available.
pub fn trajectory_svg(path: &Path, scene: Option<&Scene>) -> Result<String, PlotError> {
    let (header, rows) = logs::read_csv(path)?;
    if header != logs::TRAJECTORY_HEADER {
        return Err(PlotError::SchemaMismatch {
            path: path.display().to_string(),
            header,
        });
    }
    let mut xs = Vec::new();
    for row in &rows {
        if row.len() != 5 || row[0] == "outcome" {
            continue;
        }
        xs.push((parse_f64(path, &row[1])?, parse_f64(path, &row[2])?));
    }
    let mut xmin = xs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut xmax = xs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut ymin = xs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut ymax = xs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if let Some(scene) = scene {
        for g in &scene.goals {
            xmin = xmin.min(g.center.x - g.radius);
            xmax = xmax.max(g.center.x + g.radius);
            ymin = ymin.min(g.center.y - g.radius);
            ymax = ymax.max(g.center.y + g.radius);
        }
        for o in &scene.obstacles {
            let (c, r) = o.bounding_sphere();
            xmin = xmin.min(c.x - r);
            xmax = xmax.max(c.x + r);
            ymin = ymin.min(c.y - r);
            ymax = ymax.max(c.y + r);
        }
    }
    let frame = Frame::new(xmin - 0.3, xmax + 0.3, ymin - 0.3, ymax + 0.3);
    let mut s = svg_open("Trajectory (top-down)");
    axes(&mut s, &frame, "x [m]", "y [m]");
    if let Some(scene) = scene {
        for g in &scene.goals {
            let r_px = g.radius / (frame.xmax - frame.xmin) * (WIDTH - MARGIN_L - MARGIN_R);
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"gold\" fill-opacity=\"0.4\" stroke=\"goldenrod\"/>",
                frame.px(g.center.x),
                frame.py(g.center.y),
                r_px
            );
        }
        for o in &scene.obstacles {
            let color = match o {
                Primitive::Sphere { .. } => "dimgray",
                Primitive::Cylinder { .. } => "darkslateblue",
                Primitive::Cable { .. } => "saddlebrown",
            };
            let (c, _) = o.bounding_sphere();
            let r = o.radius().max(0.02);
            let r_px = r / (frame.xmax - frame.xmin) * (WIDTH - MARGIN_L - MARGIN_R);
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"{color}\"/>",
                frame.px(c.x),
                frame.py(c.y),
                r_px.max(2.0)
            );
        }
    }
    let path_px: Vec<(f64, f64)> = xs
        .iter()
        .map(|&(x, y)| (frame.px(x), frame.py(y)))
        .collect();
    polyline(&mut s, &path_px, "magenta", 1.6);
    if let Some(&(x, y)) = xs.first() {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"green\"/>",
            frame.px(x),
            frame.py(y)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Command traces with the repulsive-force magnitude overlaid (scaled to the
/// same axis, annotated with its own maximum).
pub fn commands_svg(path: &Path) -> Result<String, PlotError> {
    let (header, rows) = logs::read_csv(path)?;
    if header != logs::COMMANDS_HEADER {
        return Err(PlotError::SchemaMismatch {
            path: path.display().to_string(),
            header,
        });
    }
    let mut frames = Vec::new();
    for row in &rows {
        if row.len() != 9 {
            continue;
        }
        frames.push((
            parse_f64(path, &row[0])?,
            parse_f64(path, &row[2])?, // v_x
            parse_f64(path, &row[4])?, // v_psi
            parse_f64(path, &row[8])?, // f_rep magnitude
        ));
    }
    let max_frame = frames.iter().map(|f| f.0).fold(1.0, f64::max);
    let vmin = frames
        .iter()
        .flat_map(|f| [f.1, f.2])
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let vmax = frames
        .iter()
        .flat_map(|f| [f.1, f.2])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.1);
    let rep_max = frames.iter().map(|f| f.3).fold(0.0, f64::max).max(1e-9);
    let frame = Frame::new(0.0, max_frame, vmin, vmax);
    let mut s = svg_open("Commands and repulsive-force magnitude");
    axes(&mut s, &frame, "frame", "command");
    let series = |sel: fn(&(f64, f64, f64, f64)) -> f64| -> Vec<(f64, f64)> {
        frames
            .iter()
            .map(|f| (frame.px(f.0), frame.py(sel(f))))
            .collect()
    };
    polyline(&mut s, &series(|f| f.1), "seagreen", 1.4);
    polyline(&mut s, &series(|f| f.2), "steelblue", 1.4);
    // Repulsive magnitude rescaled into the visible band.
    let rep: Vec<(f64, f64)> = frames
        .iter()
        .map(|f| {
            (
                frame.px(f.0),
                frame.py(vmin + f.3 / rep_max * (vmax - vmin)),
            )
        })
        .collect();
    polyline(&mut s, &rep, "crimson", 1.0);
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" fill=\"seagreen\">v_x</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" fill=\"steelblue\">v_psi</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\" fill=\"crimson\">|F_rep| (peak {rep_max:.3})</text>\n",
        WIDTH - 200.0, MARGIN_T + 14.0,
        WIDTH - 200.0, MARGIN_T + 28.0,
        WIDTH - 200.0, MARGIN_T + 42.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Histogram of per-frame compute time.
pub fn timings_svg(path: &Path) -> Result<String, PlotError> {
    let (header, rows) = logs::read_csv(path)?;
    if header != logs::TIMINGS_HEADER {
        return Err(PlotError::SchemaMismatch {
            path: path.display().to_string(),
            header,
        });
    }
    let mut times = Vec::new();
    for row in &rows {
        if row.len() != 2 {
            continue;
        }
        times.push(parse_f64(path, &row[1])?);
    }
    let tmax = times.iter().copied().fold(0.0, f64::max).max(1e-6);
    let bins = 30usize;
    let mut counts = vec![0usize; bins];
    for &t in &times {
        let b = ((t / tmax) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let cmax = counts.iter().copied().max().unwrap_or(1).max(1);
    let frame = Frame::new(0.0, tmax, 0.0, cmax as f64);
    let mut s = svg_open("Per-frame compute time");
    axes(&mut s, &frame, "compute time [ms]", "frames");
    let bin_w = (WIDTH - MARGIN_L - MARGIN_R) / bins as f64;
    for (b, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x = MARGIN_L + b as f64 * bin_w;
        let y = frame.py(c as f64);
        let h = (HEIGHT - MARGIN_B) - y;
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"steelblue\"/>",
            x,
            y,
            (bin_w - 1.0).max(0.5),
            h
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Classify a CSV by header and emit `(output file name, svg)`.
pub fn plot_any(
    path: &Path,
    spec: Option<&GridSpec>,
    scene: Option<&Scene>,
) -> Result<(String, String), PlotError> {
    let (header, _) = logs::read_csv(path)?;
    match header.as_str() {
        logs::BELIEF_HEADER => {
            let spec = spec.ok_or(PlotError::NeedsConfig)?;
            Ok(("belief_depth.svg".into(), belief_depth_svg(path, spec)?))
        }
        logs::MODES_HEADER => Ok(("mode_depth.svg".into(), mode_depth_svg(path)?)),
        logs::TRAJECTORY_HEADER => Ok((
            "trajectory_topdown.svg".into(),
            trajectory_svg(path, scene)?,
        )),
        logs::COMMANDS_HEADER => Ok(("commands_overlay.svg".into(), commands_svg(path)?)),
        logs::TIMINGS_HEADER => Ok(("compute_hist.svg".into(), timings_svg(path)?)),
        _ => Err(PlotError::SchemaMismatch {
            path: path.display().to_string(),
            header,
        }),
    }
}
