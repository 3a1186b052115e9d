//! Deterministic SVG plots: top-down trajectories, camera frusta, objective trace.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};

use super::EvalError;
use crate::geometry::{Camera, Point3};
use crate::io::write_text;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 40.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Debug, Clone)]
pub struct PlotInput {
    pub cameras: Vec<Camera>,
    /// `(track id, root position per frame)`.
    pub trajectories: Vec<(usize, Vec<Point3>)>,
    /// Optional reference trajectories drawn dashed.
    pub reference: Vec<(usize, Vec<Point3>)>,
    pub trace: Vec<f64>,
}

/// Orthonormal basis of the plane best fitting the camera centers (the
/// ground plane for a ring rig), falling back to world x/y.
fn ground_basis(cams: &[Camera]) -> (Vector3<f64>, Vector3<f64>) {
    if cams.len() < 3 {
        return (Vector3::x(), Vector3::y());
    }
    let centers: Vec<Point3> = cams.iter().map(|c| c.extrinsics.center()).collect();
    let mu = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let cov: Matrix3<f64> = centers.iter().map(|c| (c - mu) * (c - mu).transpose()).sum();
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = eig.eigenvectors.column(order[0]).into_owned();
    if u[u.iamax()] < 0.0 {
        u.neg_mut();
    }
    let mut v = eig.eigenvectors.column(order[1]).into_owned();
    if v[v.iamax()] < 0.0 {
        v.neg_mut();
    }
    (u, v)
}

struct Frame {
    u: Vector3<f64>,
    v: Vector3<f64>,
    min: Vector2<f64>,
    scale: f64,
}

impl Frame {
    fn fit(basis: (Vector3<f64>, Vector3<f64>), points: &[Point3]) -> Self {
        let (u, v) = basis;
        let mut min = Vector2::repeat(f64::INFINITY);
        let mut max = Vector2::repeat(f64::NEG_INFINITY);
        for p in points {
            let q = Vector2::new(p.dot(&u), p.dot(&v));
            min = min.inf(&q);
            max = max.sup(&q);
        }
        if points.is_empty() {
            min = Vector2::zeros();
            max = Vector2::repeat(1.0);
        }
        let span = (max - min).max().max(1e-9);
        Self { u, v, min, scale: (SIZE - 2.0 * MARGIN) / span }
    }

    fn map(&self, p: &Point3) -> (f64, f64) {
        let q = (Vector2::new(p.dot(&self.u), p.dot(&self.v)) - self.min) * self.scale;
        (MARGIN + q.x, SIZE - MARGIN - q.y)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n"
    )
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, class: &str, dashed: bool) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
    let _ = writeln!(
        out,
        "<polyline class=\"{class}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
        coords.join(" ")
    );
}

fn frustum_points(cam: &Camera, depth: f64) -> (Point3, [Point3; 4]) {
    let k = &cam.intrinsics;
    let (w, h) = (2.0 * k.cx, 2.0 * k.cy);
    let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)].map(|(x, y)| {
        let ray = k.unproject(&Vector2::new(x, y));
        cam.extrinsics.rotation_matrix().transpose() * (ray.normalize() * depth) + cam.extrinsics.center()
    });
    (cam.extrinsics.center(), corners)
}

fn frustum_depth(cams: &[Camera]) -> f64 {
    let centers: Vec<Point3> = cams.iter().map(|c| c.extrinsics.center()).collect();
    let mu = centers.iter().sum::<Vector3<f64>>() / centers.len().max(1) as f64;
    let spread = centers.iter().map(|c| (c - mu).norm()).fold(0.0, f64::max);
    if spread > 0.0 {
        0.15 * spread
    } else {
        1.0
    }
}

fn draw_frusta(out: &mut String, frame: &Frame, cams: &[Camera], depth: f64) {
    for cam in cams {
        let (c, corners) = frustum_points(cam, depth);
        let (cx, cy) = frame.map(&c);
        let _ = writeln!(out, "<g class=\"frustum\" data-view=\"{}\">", cam.id);
        for p in &corners {
            let (x, y) = frame.map(p);
            let _ = writeln!(out, "<line x1=\"{cx:.2}\" y1=\"{cy:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"#444\" stroke-width=\"1\"/>");
        }
        let mut ring: Vec<(f64, f64)> = corners.iter().map(|p| frame.map(p)).collect();
        ring.push(ring[0]);
        polyline(out, &ring, "#444", "frustum-face", false);
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            cx + 4.0,
            cy - 4.0,
            cam.id
        );
        out.push_str("</g>\n");
    }
}

/// Top-down plot of every person's root trajectory (one vertex per frame).
pub fn render_trajectories(input: &PlotInput) -> String {
    let mut pts: Vec<Point3> = input.trajectories.iter().chain(&input.reference).flat_map(|(_, t)| t.iter().copied()).collect();
    pts.extend(input.cameras.iter().map(|c| c.extrinsics.center()));
    let frame = Frame::fit(ground_basis(&input.cameras), &pts);
    let mut out = header("root trajectories (top-down)");
    for (track, traj) in &input.reference {
        let p: Vec<(f64, f64)> = traj.iter().map(|x| frame.map(x)).collect();
        polyline(&mut out, &p, COLORS[track % COLORS.len()], "reference", true);
    }
    for (track, traj) in &input.trajectories {
        let p: Vec<(f64, f64)> = traj.iter().map(|x| frame.map(x)).collect();
        polyline(&mut out, &p, COLORS[track % COLORS.len()], "trajectory", false);
    }
    for cam in &input.cameras {
        let (x, y) = frame.map(&cam.extrinsics.center());
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#444\"/>");
    }
    out.push_str("</svg>\n");
    out
}

/// Top-down plot of one frustum per camera.
pub fn render_frusta(input: &PlotInput) -> String {
    let depth = frustum_depth(&input.cameras);
    let mut pts = Vec::new();
    for cam in &input.cameras {
        let (c, corners) = frustum_points(cam, depth);
        pts.push(c);
        pts.extend(corners);
    }
    let frame = Frame::fit(ground_basis(&input.cameras), &pts);
    let mut out = header("camera frusta (top-down)");
    draw_frusta(&mut out, &frame, &input.cameras, depth);
    out.push_str("</svg>\n");
    out
}

/// Objective (log10) against accepted iteration.
pub fn render_trace(input: &PlotInput) -> String {
    let mut out = header("objective (log10) per iteration");
    let vals: Vec<f64> = input.trace.iter().map(|v| v.max(f64::MIN_POSITIVE).log10()).collect();
    if !vals.is_empty() {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-9);
        let n = (vals.len() - 1).max(1) as f64;
        let w = SIZE - 2.0 * MARGIN;
        let pts: Vec<(f64, f64)> =
            vals.iter().enumerate().map(|(i, v)| (MARGIN + w * i as f64 / n, SIZE - MARGIN - w * (v - lo) / span)).collect();
        polyline(&mut out, &pts, COLORS[0], "trace", false);
        let _ = writeln!(out, "<text x=\"{MARGIN}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{hi:.3}</text>", MARGIN);
        let _ = writeln!(
            out,
            "<text x=\"{MARGIN}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{lo:.3}</text>",
            SIZE - MARGIN + 14.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `trajectories.svg`, `frusta.svg` and `trace.svg` into `dir`.
pub fn render_plots(input: &PlotInput, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let files =
        [("trajectories.svg", render_trajectories(input)), ("frusta.svg", render_frusta(input)), ("trace.svg", render_trace(input))];
    let mut out = Vec::new();
    for (name, svg) in files {
        let path = dir.join(name);
        write_text(&path, &svg)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SceneConfig};

    fn input() -> PlotInput {
        let s = generate(&SceneConfig { frames: 30, ..SceneConfig::default() }).unwrap();
        PlotInput {
            cameras: s.truth.cameras.clone(),
            trajectories: s.truth.people.iter().map(|p| (p.track_id, (0..30).map(|f| p.joint(f, 0)).collect())).collect(),
            reference: vec![],
            trace: vec![100.0, 50.0, 20.0, 19.0],
        }
    }

    #[test]
    fn plots_are_byte_stable_and_complete() {
        let a = input();
        assert_eq!(render_trajectories(&a), render_trajectories(&input()));
        assert_eq!(render_frusta(&a), render_frusta(&input()));
        assert_eq!(render_trace(&a), render_trace(&input()));
        assert_eq!(render_frusta(&a).matches("class=\"frustum\"").count(), a.cameras.len());
        let svg = render_trajectories(&a);
        let lines: Vec<&str> = svg.lines().filter(|l| l.contains("class=\"trajectory\"")).collect();
        assert_eq!(lines.len(), 3);
        for l in lines {
            let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(pts.split(' ').count(), 30);
        }
    }

    #[test]
    fn writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = render_plots(&input(), dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        assert!(files.iter().all(|f| f.exists()));
    }
}
