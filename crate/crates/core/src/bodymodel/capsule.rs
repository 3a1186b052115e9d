//! Capsule-union surface: signed distance, deterministic surface samples and
//! their derivatives with respect to the posed skeleton.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use super::{forward_kinematics_matrices, BodyParams, BodyTemplate, CapsuleSpec, PosedBody};
use crate::geometry::{so3, Point3};

/// Distance from `p` to segment `[a, b]` and the clamped segment parameter.
pub fn segment_distance(p: &Point3, a: &Point3, b: &Point3) -> (f64, f64) {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    ((p - (a + d * t)).norm(), t)
}

/// Closest capsule to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfHit {
    /// Signed distance, mm; negative inside.
    pub value: f64,
    pub capsule: usize,
    /// Parameter of the closest axis point, 0 at `joint_a`.
    pub t: f64,
    /// Unit direction from the closest axis point to the query (zero on the axis).
    pub normal: Vector3<f64>,
}

/// Posed capsules of one person, with a bounding sphere for early rejection.
#[derive(Debug, Clone)]
pub struct PersonSurface {
    segments: Vec<(Point3, Point3, f64)>,
    center: Point3,
    bound: f64,
}

impl PersonSurface {
    pub fn new(template: &BodyTemplate, posed: &PosedBody) -> Self {
        let n = posed.positions.len() as f64;
        let center = posed.positions.iter().sum::<Vector3<f64>>() / n;
        let segments: Vec<(Point3, Point3, f64)> =
            template.capsules.iter().map(|c| (posed.positions[c.joint_a], posed.positions[c.joint_b], c.radius)).collect();
        let bound = segments.iter().map(|(a, b, r)| (a - center).norm().max((b - center).norm()) + r).fold(0.0, f64::max);
        Self { segments, center, bound }
    }

    /// Bounding sphere `(center, radius)` of all capsules.
    pub fn bounds(&self) -> (Point3, f64) {
        (self.center, self.bound)
    }

    /// True when `p` is farther than `margin` from every capsule.
    pub fn is_clear(&self, p: &Point3, margin: f64) -> bool {
        (p - self.center).norm() > self.bound + margin
    }

    pub fn sdf(&self, p: &Point3) -> SdfHit {
        let mut best = SdfHit { value: f64::INFINITY, capsule: 0, t: 0.0, normal: Vector3::zeros() };
        for (k, (a, b, r)) in self.segments.iter().enumerate() {
            let (dist, t) = segment_distance(p, a, b);
            if dist - r < best.value {
                let c = a + (b - a) * t;
                let normal = if dist > 0.0 { (p - c) / dist } else { Vector3::zeros() };
                best = SdfHit { value: dist - r, capsule: k, t, normal };
            }
        }
        best
    }
}

/// Signed distance from `p` to the capsule union of a posed body.
pub fn capsule_sdf(p: &Point3, template: &BodyTemplate, params: &BodyParams) -> f64 {
    PersonSurface::new(template, &pose(template, params)).sdf(p).value
}

fn pose(template: &BodyTemplate, params: &BodyParams) -> PosedBody {
    let offsets = template.shaped_offsets(&params.beta);
    forward_kinematics_matrices(template, &offsets, &params.local_matrices(), &so3::exp(&params.rotation), &params.translation)
}

/// A surface point in capsule-local coordinates.
///
/// For a segment capsule with axis `d` (the shaped offset of `joint_b`) the
/// point is `J_a + G_a·(along·d + r·(c[0]·e1 + c[1]·e2 + c[2]·d̂))`, where
/// `e1 = normalize(h × d)`, `e2 = d̂ × e1` and `h` is a fixed helper axis. For a
/// sphere it is `J_a + G_a·r·c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDescriptor {
    pub capsule: usize,
    pub along: f64,
    pub c: [f64; 3],
    helper: usize,
}

fn capsule_length(spec: &CapsuleSpec, template: &BodyTemplate) -> f64 {
    if spec.joint_a == spec.joint_b {
        0.0
    } else {
        Vector3::from(template.joints[spec.joint_b].offset).norm()
    }
}

/// Total rest-shape surface area of all capsules, mm².
pub fn surface_area(template: &BodyTemplate) -> f64 {
    template.capsules.iter().map(|c| 2.0 * PI * c.radius * capsule_length(c, template) + 4.0 * PI * c.radius * c.radius).sum()
}

/// Deterministic quasi-uniform samples, `round(density · area)` per capsule
/// (density in samples per mm²).
pub fn sample_descriptors(template: &BodyTemplate, density: f64) -> Vec<SampleDescriptor> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut out = Vec::new();
    for (k, spec) in template.capsules.iter().enumerate() {
        let r = spec.radius;
        let len = capsule_length(spec, template);
        let cyl_area = 2.0 * PI * r * len;
        let area = cyl_area + 4.0 * PI * r * r;
        let n = (density * area).round() as usize;
        let offset = Vector3::from(template.joints[spec.joint_b].offset);
        let helper = offset.iamin();
        let mut push = |along: f64, c: [f64; 3]| out.push(SampleDescriptor { capsule: k, along, c, helper });
        if len == 0.0 {
            for i in 0..n {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = i as f64 * golden;
                push(0.0, [rho * phi.cos(), rho * phi.sin(), z]);
            }
            continue;
        }
        let n_cyl = ((n as f64) * cyl_area / area).round() as usize;
        let n_caps = n - n_cyl;
        for i in 0..n_cyl {
            let phi = i as f64 * golden;
            push((i as f64 + 0.5) / n_cyl as f64, [phi.cos(), phi.sin(), 0.0]);
        }
        for (m, along, sign) in [(n_caps / 2, 0.0, -1.0), (n_caps - n_caps / 2, 1.0, 1.0)] {
            for i in 0..m {
                let z = (i as f64 + 0.5) / m as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = i as f64 * golden;
                push(along, [rho * phi.cos(), rho * phi.sin(), sign * z]);
            }
        }
    }
    out
}

/// Density giving about `count` samples on the rest-shape body.
pub fn density_for_count(template: &BodyTemplate, count: usize) -> f64 {
    count as f64 / surface_area(template)
}

struct LocalFrame {
    d: Vector3<f64>,
    n: Vector3<f64>,
    w: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
}

fn local_frame(d: Vector3<f64>, helper: usize) -> LocalFrame {
    let h = Vector3::ith(helper, 1.0);
    let n = d.normalize();
    let w = h.cross(&d);
    let e1 = w.normalize();
    let e2 = n.cross(&e1);
    LocalFrame { d, n, w, e1, e2 }
}

impl SampleDescriptor {
    fn local(&self, template: &BodyTemplate, offsets: &[Vector3<f64>]) -> Vector3<f64> {
        let spec = &template.capsules[self.capsule];
        let r = spec.radius;
        let c = Vector3::from(self.c);
        if spec.joint_a == spec.joint_b {
            return c * r;
        }
        let f = local_frame(offsets[spec.joint_b], self.helper);
        f.d * self.along + (f.e1 * c.x + f.e2 * c.y + f.n * c.z) * r
    }

    pub fn point(&self, template: &BodyTemplate, offsets: &[Vector3<f64>], posed: &PosedBody) -> Point3 {
        let a = template.capsules[self.capsule].joint_a;
        posed.positions[a] + posed.globals[a] * self.local(template, offsets)
    }

    /// Accumulates the gradient of a scalar through this sample point given
    /// `g` = ∂L/∂point. Returns the offset gradient of `joint_b` (zero for
    /// spheres) and adds the position/orientation gradients of `joint_a`.
    pub fn backward(
        &self,
        template: &BodyTemplate,
        offsets: &[Vector3<f64>],
        posed: &PosedBody,
        g: &Vector3<f64>,
        positions: &mut [Vector3<f64>],
        globals: &mut [Matrix3<f64>],
    ) -> Vector3<f64> {
        let spec = &template.capsules[self.capsule];
        let a = spec.joint_a;
        let q = self.local(template, offsets);
        positions[a] += g;
        globals[a] += g * q.transpose();
        if spec.joint_a == spec.joint_b {
            return Vector3::zeros();
        }
        let r = spec.radius;
        let gq = posed.globals[a].transpose() * g;
        let f = local_frame(offsets[spec.joint_b], self.helper);
        let h = Vector3::ith(self.helper, 1.0);
        let mut g_d = gq * self.along;
        let g_e2 = gq * (r * self.c[1]);
        let mut g_n = gq * (r * self.c[2]) + f.e1.cross(&g_e2);
        let g_e1 = gq * (r * self.c[0]) + g_e2.cross(&f.n);
        let g_w = (g_e1 - f.e1 * f.e1.dot(&g_e1)) / f.w.norm();
        g_d += g_w.cross(&h);
        g_n -= f.n * f.n.dot(&g_n);
        g_d += g_n / f.d.norm();
        g_d
    }
}

/// Sample points for the given descriptors, without any filtering.
pub fn surface_points(
    template: &BodyTemplate,
    offsets: &[Vector3<f64>],
    posed: &PosedBody,
    descriptors: &[SampleDescriptor],
) -> Vec<Point3> {
    descriptors.iter().map(|s| s.point(template, offsets, posed)).collect()
}

/// Surface samples of a posed body, dropping those buried inside another
/// capsule of the same body.
pub fn surface_samples(template: &BodyTemplate, params: &BodyParams, density: f64) -> Vec<Point3> {
    let offsets = template.shaped_offsets(&params.beta);
    let posed = pose(template, params);
    let surface = PersonSurface::new(template, &posed);
    surface_points(template, &offsets, &posed, &sample_descriptors(template, density))
        .into_iter()
        .filter(|p| surface.sdf(p).value > -1e-6)
        .collect()
}
