//! Procedural walking motions along smooth closed paths.

use std::f64::consts::{PI, TAU};

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bodymodel::{BodyParams, NUM_JOINTS, NUM_SHAPE};
use crate::geometry::so3;

/// Closed Catmull-Rom curve through `points`, evaluated at `s ∈ [0, 1)`.
pub fn closed_catmull_rom(points: &[Vector2<f64>], s: f64) -> Vector2<f64> {
    let n = points.len();
    let u = s.rem_euclid(1.0) * n as f64;
    let i = (u.floor() as usize).min(n - 1);
    let t = u - i as f64;
    let p = |k: isize| points[(i as isize + k).rem_euclid(n as isize) as usize];
    let (p0, p1, p2, p3) = (p(-1), p(0), p(1), p(2));
    let t2 = t * t;
    let t3 = t2 * t;
    (p1 * 2.0 + (p2 - p0) * t + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2 + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3) * 0.5
}

/// Random gait and path parameters of one synthetic person.
#[derive(Debug, Clone)]
pub struct Walker {
    pub center: Vector2<f64>,
    pub controls: Vec<Vector2<f64>>,
    pub loops: f64,
    pub phase: f64,
    pub cadence_hz: f64,
    pub hip_amp: f64,
    pub arm_amp: f64,
    pub beta: [f64; NUM_SHAPE],
}

impl Walker {
    pub fn random<R: Rng>(rng: &mut R, center: Vector2<f64>) -> Self {
        let k = 6;
        let start = rng.random_range(0.0..TAU);
        let controls = (0..k)
            .map(|i| {
                let a = start + TAU * i as f64 / k as f64;
                let r = rng.random_range(300.0..700.0);
                Vector2::new(a.cos(), a.sin()) * r
            })
            .collect();
        let normal = Normal::new(0.0f64, 0.5).expect("valid normal");
        Self {
            center,
            controls,
            loops: rng.random_range(0.6..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            phase: rng.random_range(0.0..TAU),
            cadence_hz: rng.random_range(0.8..1.0),
            hip_amp: rng.random_range(0.35..0.5),
            arm_amp: rng.random_range(0.25..0.45),
            beta: std::array::from_fn(|_| normal.sample(rng).clamp(-1.5, 1.5)),
        }
    }

    fn ground(&self, s: f64) -> Vector2<f64> {
        self.center + closed_catmull_rom(&self.controls, s)
    }

    /// Parameters at frame `t` of a `frames`-long sequence at `fps`.
    pub fn params(&self, t: usize, frames: usize, fps: f64) -> BodyParams {
        let s = self.loops * t as f64 / frames.max(1) as f64;
        let ds = self.loops.signum() * 1e-3;
        let heading = self.ground(s + ds) - self.ground(s - ds);
        let yaw = heading.y.atan2(heading.x);
        let phi = TAU * self.cadence_hz * t as f64 / fps + self.phase;
        let (sp, cp) = (phi.sin(), phi.cos());
        let g = self.ground(s);

        let rx = |a: f64| Vector3::new(a, 0.0, 0.0);
        let mut pose = [Vector3::zeros(); NUM_JOINTS];
        let swing = self.hip_amp * sp;
        pose[1] = rx(swing);
        pose[2] = rx(-swing);
        pose[4] = rx(-0.1 - 0.3 * (1.0 - (phi + 0.8).cos()));
        pose[5] = rx(-0.1 - 0.3 * (1.0 + (phi + 0.8).cos()));
        pose[7] = rx(0.15 * sp);
        pose[8] = rx(-0.15 * sp);
        pose[3] = Vector3::new(0.05, 0.0, 0.08 * sp);
        pose[6] = Vector3::new(0.0, 0.0, 0.05 * sp);
        pose[12] = Vector3::new(-0.05, 0.0, -0.1 * sp);
        pose[15] = Vector3::new(0.1 * cp, 0.0, 0.0);
        let arm = self.arm_amp * sp;
        let lower = 75f64.to_radians();
        pose[16] = so3::log(&(so3::exp(&rx(-arm)) * so3::exp(&Vector3::new(0.0, lower, 0.0))));
        pose[17] = so3::log(&(so3::exp(&rx(arm)) * so3::exp(&Vector3::new(0.0, -lower, 0.0))));
        let bend = 0.35 + 0.2 * sp;
        pose[18] = Vector3::new(0.0, 0.0, bend);
        pose[19] = Vector3::new(0.0, 0.0, -(0.35 - 0.2 * sp));
        pose[20] = Vector3::new(0.0, 0.0, 0.1);
        pose[21] = Vector3::new(0.0, 0.0, -0.1);

        BodyParams {
            beta: self.beta,
            pose,
            rotation: Vector3::new(0.0, 0.0, yaw - PI / 2.0),
            translation: Vector3::new(g.x, g.y, 12.0 * (2.0 * phi).sin()),
        }
    }
}
