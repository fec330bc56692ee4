//! Minimal SVG renderers: planned-score / reward curves for an episode
//! trace, and a top-down (x, y) trajectory plot of the gripper and
//! objects. Output is plain hand-built SVG, always well-formed XML.

use std::path::Path;

use log::warn;

use crate::dataset::atomic_write;
use crate::env::STATE_DIM;
use crate::error::{JumpyError, Result};
use crate::harness::EvalRecord;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

fn svg_header(title: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axes {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Axes {
    fn from_ranges(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Axes {
        let (y_min, y_max) = if (y_max - y_min).abs() < 1e-12 {
            (y_min - 0.5, y_max + 0.5)
        } else {
            (y_min, y_max)
        };
        let (x_min, x_max) = if (x_max - x_min).abs() < 1e-12 {
            (x_min - 0.5, x_max + 0.5)
        } else {
            (x_min, x_max)
        };
        Axes { x_min, x_max, y_min, y_max }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }

    fn frame(&self) -> String {
        format!(
            "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" \
             fill=\"none\" stroke=\"#888\"/>\n\
             <text x=\"{MARGIN}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.2}</text>\n\
             <text x=\"{MARGIN}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{:.2}</text>\n",
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN,
            HEIGHT - MARGIN + 14.0,
            self.y_min,
            MARGIN - 6.0,
            self.y_max
        )
    }
}

fn polyline(points: &[(f64, f64)], axes: &Axes, color: &str) -> String {
    let pts: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", axes.px(*x), axes.py(*y)))
        .collect();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
        pts.join(" ")
    )
}

/// Planned score and realized reward vs environment step.
pub fn render_trace_svg(record: &EvalRecord) -> Result<String> {
    let trace = record
        .trace
        .as_ref()
        .ok_or_else(|| JumpyError::domain("record has no trace"))?;
    if trace.is_empty() {
        return Err(JumpyError::domain("record trace is empty"));
    }
    let xs: Vec<f64> = trace.iter().map(|t| t.step as f64).collect();
    let scores: Vec<f64> = trace.iter().map(|t| t.planned_score).collect();
    let rewards: Vec<f64> = trace.iter().map(|t| t.reward).collect();
    let y_min = scores.iter().chain(rewards.iter()).cloned().fold(f64::INFINITY, f64::min);
    let y_max = scores
        .iter()
        .chain(rewards.iter())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let axes = Axes::from_ranges(xs[0], *xs.last().unwrap(), y_min, y_max);

    let mut svg = svg_header(&format!(
        "{} / {} seed {}: planned score (blue) vs reward (red)",
        record.task, record.variant, record.seed
    ));
    svg.push_str(&axes.frame());
    let score_pts: Vec<(f64, f64)> = xs.iter().cloned().zip(scores).collect();
    let reward_pts: Vec<(f64, f64)> = xs.iter().cloned().zip(rewards).collect();
    svg.push_str(&polyline(&score_pts, &axes, "#1f4e9c"));
    svg.push_str(&polyline(&reward_pts, &axes, "#c0392b"));
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Top-down view of an episode: gripper path plus object paths, with
/// start markers. States use the fixed 12-dim layout.
pub fn render_trajectory_svg(record: &EvalRecord) -> Result<String> {
    let states = record
        .states
        .as_ref()
        .ok_or_else(|| JumpyError::domain("record has no states"))?;
    if states.is_empty() {
        return Err(JumpyError::domain("record states are empty"));
    }
    let axes = Axes::from_ranges(-1.05, 1.05, -0.05, 1.05);
    let mut svg = svg_header(&format!(
        "{} / {} seed {}: gripper (black), red / green / blue objects",
        record.task, record.variant, record.seed
    ));
    svg.push_str(&axes.frame());
    // (x index, y index, color) for gripper and the three objects
    let tracks: [(usize, usize, &str); 4] = [
        (0, 1, "#222222"),
        (4, 5, "#c0392b"),
        (8, 9, "#27ae60"),
        (11, usize::MAX, "#1f4e9c"),
    ];
    for (xi, yi, color) in tracks {
        // blue object's (x, y) live at indices 10, 11
        let (xi, yi) = if yi == usize::MAX { (10, 11) } else { (xi, yi) };
        let pts: Vec<(f64, f64)> = states
            .iter()
            .map(|s: &[f64; STATE_DIM]| (s[xi], s[yi]))
            .collect();
        svg.push_str(&polyline(&pts, &axes, color));
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\"/>\n",
            axes.px(pts[0].0),
            axes.py(pts[0].1)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render every record in a JSONL eval file. Records without a trace or
/// states are skipped with a warning rather than failing the run.
pub fn render_records(records: &[EvalRecord], out_dir: &Path) -> Result<usize> {
    let mut written = 0;
    for r in records {
        let stem = format!("{}_{}_seed{}", r.task, r.variant, r.seed);
        if r.trace.is_some() {
            let svg = render_trace_svg(r)?;
            atomic_write(&out_dir.join(format!("{stem}_trace.svg")), svg.as_bytes())?;
            written += 1;
        } else {
            warn!("record {stem} has no trace; skipping score plot");
        }
        if r.states.is_some() {
            let svg = render_trajectory_svg(r)?;
            atomic_write(&out_dir.join(format!("{stem}_traj.svg")), svg.as_bytes())?;
            written += 1;
        } else {
            warn!("record {stem} has no states; skipping trajectory plot");
        }
    }
    Ok(written)
}
