use nalgebra::{Matrix3, Vector3};

use super::{GeometryError, Point3};

/// Condition-number limit for the triangulation normal matrix.
pub const MAX_CONDITION: f64 = 1e10;

/// A 3D line in Plücker coordinates: unit direction `n` and moment `l = p × n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlueckerRay {
    pub n: Vector3<f64>,
    /// Millimeters.
    pub l: Vector3<f64>,
}

impl PlueckerRay {
    /// Line through `p` with direction `dir` (normalized here).
    pub fn from_point_direction(p: &Point3, dir: &Vector3<f64>) -> Self {
        let n = dir.normalize();
        Self { n, l: p.cross(&n) }
    }

    /// Builds a ray from raw coordinates, normalizing and re-orthogonalizing
    /// the moment so the invariants hold.
    pub fn from_coordinates(n: Vector3<f64>, l: Vector3<f64>) -> Self {
        let scale = n.norm();
        let n = n / scale;
        let l = l / scale;
        Self { n, l: l - n * n.dot(&l) }
    }

    /// Point on the line closest to the origin.
    pub fn foot(&self) -> Point3 {
        self.n.cross(&self.l)
    }

    /// `foot() + s·n`.
    pub fn point_at(&self, s: f64) -> Point3 {
        self.foot() + self.n * s
    }

    /// `‖x × n − l‖`, the Euclidean distance from `x` to the line.
    pub fn distance(&self, x: &Point3) -> f64 {
        point_ray_distance(x, self)
    }

    pub fn satisfies_invariants(&self) -> bool {
        (self.n.norm() - 1.0).abs() < 1e-12 && self.n.dot(&self.l).abs() < 1e-9 * (1.0 + self.l.norm())
    }
}

pub fn point_ray_distance(x: &Point3, ray: &PlueckerRay) -> f64 {
    (x.cross(&ray.n) - ray.l).norm()
}

/// Reciprocal product `n_a·l_b + n_b·l_a`; zero iff the lines are coplanar.
pub fn ray_coplanarity(a: &PlueckerRay, b: &PlueckerRay) -> f64 {
    // A single IEEE addition is commutative, so swapping arguments is bit-exact.
    a.n.dot(&b.l) + b.n.dot(&a.l)
}

/// Weighted least-squares intersection of rays.
///
/// Minimizes `Σ wᵢ · dist(x, rayᵢ)²` through the 3×3 normal system
/// `Σ wᵢ (I − nᵢnᵢᵀ) x = Σ wᵢ (I − nᵢnᵢᵀ) fᵢ` where `fᵢ` is the foot of ray `i`.
pub fn triangulate(rays: &[PlueckerRay], weights: Option<&[f64]>) -> Result<Point3, GeometryError> {
    if rays.len() < 2 {
        return Err(GeometryError::TooFewRays(rays.len()));
    }
    if let Some(w) = weights {
        if w.len() != rays.len() {
            return Err(GeometryError::LengthMismatch { expected: rays.len(), got: w.len() });
        }
    }
    // Accumulate in a canonical order so the result does not depend on the
    // order of the input list.
    let mut items: Vec<(f64, &PlueckerRay)> = rays.iter().enumerate().map(|(i, r)| (weights.map_or(1.0, |w| w[i]), r)).collect();
    items.sort_by(|a, b| ray_key(a.1, a.0).partial_cmp(&ray_key(b.1, b.0)).unwrap_or(std::cmp::Ordering::Equal));

    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (w, ray) in items {
        if w <= 0.0 {
            continue;
        }
        let proj = Matrix3::identity() - ray.n * ray.n.transpose();
        a += w * proj;
        b += w * (proj * ray.foot());
    }
    let eig = a.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(GeometryError::DegenerateConfiguration("triangulation rays are (nearly) parallel"));
    }
    let inv = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();
    Ok(inv * b)
}

fn ray_key(r: &PlueckerRay, w: f64) -> [f64; 7] {
    [r.n.x, r.n.y, r.n.z, r.l.x, r.l.y, r.l.z, w]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    /// Closest point by explicit line parameterization `p0 + s·d`.
    fn parametric_distance(x: &Vector3<f64>, p0: &Vector3<f64>, d: &Vector3<f64>) -> f64 {
        let s = (x - p0).dot(d) / d.dot(d);
        (x - (p0 + d * s)).norm()
    }

    #[test]
    fn distance_examples() {
        let ray = PlueckerRay { n: Vector3::z(), l: Vector3::zeros() };
        assert_eq!(point_ray_distance(&Vector3::new(0.0, 0.0, 5.0), &ray), 0.0);
        assert_eq!(point_ray_distance(&Vector3::new(1.0, 0.0, 0.0), &ray), 1.0);
    }

    #[test]
    fn distance_matches_parametric_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p0 = rand_vec(&mut rng, 2000.0);
            let d = rand_vec(&mut rng, 1.0);
            let x = rand_vec(&mut rng, 2000.0);
            let ray = PlueckerRay::from_point_direction(&p0, &d);
            let oracle = parametric_distance(&x, &p0, &d);
            assert!((ray.distance(&x) - oracle).abs() < 1e-9 * (1.0 + oracle));
        }
    }

    #[test]
    fn coplanarity_examples() {
        let a = PlueckerRay { n: Vector3::z(), l: Vector3::zeros() };
        let b = PlueckerRay::from_point_direction(&Vector3::new(0.0, 1.0, 0.0), &Vector3::x());
        assert_eq!(b.l, Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(ray_coplanarity(&a, &b), -1.0);
        let c = PlueckerRay::from_point_direction(&Vector3::zeros(), &Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(ray_coplanarity(&a, &c), 0.0);
    }

    #[test]
    fn triangulate_exact_intersection() {
        let target = Vector3::new(1.0, 2.0, 3.0);
        let r1 = PlueckerRay::from_point_direction(&Vector3::new(100.0, 0.0, 0.0), &(target - Vector3::new(100.0, 0.0, 0.0)));
        let r2 = PlueckerRay::from_point_direction(&Vector3::new(0.0, -50.0, 20.0), &(target - Vector3::new(0.0, -50.0, 20.0)));
        let x = triangulate(&[r1, r2], None).unwrap();
        assert!((x - target).norm() < 1e-9 * target.norm());
    }

    #[test]
    fn triangulate_noisy_rays_recovers_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = Vector3::new(300.0, -200.0, 900.0);
        let rays: Vec<_> = (0..5)
            .map(|i| {
                let ang = i as f64 * 1.2566;
                let c = Vector3::new(4000.0 * ang.cos(), 4000.0 * ang.sin(), 1800.0);
                let d = (target - c).normalize();
                // lateral offset of 0.5 mm perpendicular to the ray
                let mut perp = d.cross(&rand_vec(&mut rng, 1.0)).normalize();
                perp *= 0.5;
                PlueckerRay::from_point_direction(&(c + perp), &d)
            })
            .collect();
        let x = triangulate(&rays, None).unwrap();
        assert!((x - target).norm() < 1.0);
    }

    #[test]
    fn parallel_rays_are_degenerate() {
        let r1 = PlueckerRay::from_point_direction(&Vector3::zeros(), &Vector3::x());
        let r2 = PlueckerRay::from_point_direction(&Vector3::new(0.0, 10.0, 0.0), &Vector3::x());
        assert!(matches!(triangulate(&[r1, r2], None), Err(GeometryError::DegenerateConfiguration(_))));
        assert!(triangulate(&[r1], None).is_err());
    }

    proptest! {
        #[test]
        fn constructed_rays_satisfy_invariants(px in -5e3..5e3f64, py in -5e3..5e3f64, pz in -5e3..5e3f64,
                                               dx in -1.0..1.0f64, dy in -1.0..1.0f64, dz in 0.1..1.0f64) {
            let ray = PlueckerRay::from_point_direction(&Vector3::new(px, py, pz), &Vector3::new(dx, dy, dz));
            prop_assert!(ray.satisfies_invariants());
        }

        #[test]
        fn distance_invariant_under_sliding(px in -5e3..5e3f64, py in -5e3..5e3f64, dx in -1.0..1.0f64,
                                            dz in 0.1..1.0f64, s in -3e3..3e3f64, qx in -5e3..5e3f64) {
            let p = Vector3::new(px, py, 100.0);
            let d = Vector3::new(dx, 0.3, dz);
            let a = PlueckerRay::from_point_direction(&p, &d);
            let b = PlueckerRay::from_point_direction(&(p + d.normalize() * s), &d);
            let x = Vector3::new(qx, -qx * 0.5, 40.0);
            prop_assert!((a.distance(&x) - b.distance(&x)).abs() < 1e-8 * (1.0 + a.distance(&x)));
        }

        #[test]
        fn coplanarity_is_symmetric(a in proptest::array::uniform6(-1e3..1e3f64), b in proptest::array::uniform6(-1e3..1e3f64)) {
            let ra = PlueckerRay::from_point_direction(&Vector3::new(a[0], a[1], a[2]), &Vector3::new(a[3], a[4], a[5] + 1e3 + 1.0));
            let rb = PlueckerRay::from_point_direction(&Vector3::new(b[0], b[1], b[2]), &Vector3::new(b[3] + 1e3 + 1.0, b[4], b[5]));
            prop_assert_eq!(ray_coplanarity(&ra, &rb), ray_coplanarity(&rb, &ra));
        }

        #[test]
        fn triangulation_is_permutation_invariant(seed in 0u64..1000, rot in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = rand_vec(&mut rng, 1000.0);
            let mut rays: Vec<_> = (0..5).map(|_| {
                let c = rand_vec(&mut rng, 5000.0);
                PlueckerRay::from_point_direction(&c, &(target + rand_vec(&mut rng, 20.0) - c))
            }).collect();
            let w: Vec<f64> = (0..5).map(|i| 0.5 + i as f64 * 0.1).collect();
            let x1 = triangulate(&rays, Some(&w)).unwrap();
            rays.rotate_left(rot);
            let mut w2 = w.clone();
            w2.rotate_left(rot);
            let x2 = triangulate(&rays, Some(&w2)).unwrap();
            prop_assert!((x1 - x2).norm() <= 1e-9 * (1.0 + x1.norm()));
        }
    }
}
