use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::plucker::PlueckerRay;
use super::{so3, GeometryError, Pixel, Point3};

/// Camera-frame depth (mm) below which a point counts as behind the camera.
pub const MIN_DEPTH_MM: f64 = 1e-6;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self, GeometryError> {
        let finite = [fx, fy, cx, cy, skew].iter().all(|v| v.is_finite());
        if !finite || fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics { fx, fy });
        }
        Ok(Self { fx, fy, cx, cy, skew })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, self.skew, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let (fx, fy, s, cx, cy) = (self.fx, self.fy, self.skew, self.cx, self.cy);
        Matrix3::new(1.0 / fx, -s / (fx * fy), (s * cy - cx * fy) / (fx * fy), 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0)
    }

    /// Back-projects a pixel to the camera-frame direction `K⁻¹ [u, v, 1]ᵀ`.
    pub fn unproject(&self, px: &Pixel) -> Vector3<f64> {
        let y = (px.y - self.cy) / self.fy;
        let x = (px.x - self.cx - self.skew * y) / self.fx;
        Vector3::new(x, y, 1.0)
    }

    /// Projects a camera-frame point with positive depth.
    pub fn project_camera_point(&self, pc: &Vector3<f64>) -> Pixel {
        let x = pc.x / pc.z;
        let y = pc.y / pc.z;
        Vector2::new(self.fx * x + self.skew * y + self.cx, self.fy * y + self.cy)
    }
}

/// World-to-camera rigid transform: `x_cam = R · x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    /// Axis-angle (radians), canonical with angle in `[0, π]`.
    pub rotation: Vector3<f64>,
    /// Millimeters.
    pub translation: Vector3<f64>,
}

impl Default for Extrinsics {
    fn default() -> Self {
        Self::identity()
    }
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self { rotation: Vector3::zeros(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self::from_matrix(&so3::exp(&rotation), translation)
    }

    pub fn from_matrix(r: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: so3::log(r), translation }
    }

    /// Builds the transform of a camera with orientation `r` centered at `center`.
    pub fn from_center(r: &Matrix3<f64>, center: &Point3) -> Self {
        Self::from_matrix(r, -(r * center))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        so3::exp(&self.rotation)
    }

    /// Optical center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Point3 {
        -(self.rotation_matrix().transpose() * self.translation)
    }

    pub fn to_camera(&self, p: &Point3) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation
    }

    pub fn matrix3x4(&self) -> Matrix3x4<f64> {
        let r = self.rotation_matrix();
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.set_column(3, &self.translation);
        m
    }
}

/// Calibrated view: intrinsics are known, extrinsics may still be a guess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pub id: usize,
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
    pub initialized: bool,
}

impl Camera {
    pub fn new(id: usize, intrinsics: Intrinsics, extrinsics: Extrinsics) -> Self {
        Self { id, intrinsics, extrinsics, initialized: true }
    }

    pub fn project(&self, p: &Point3) -> Result<Pixel, GeometryError> {
        project(p, self)
    }

    pub fn pixel_to_ray(&self, px: &Pixel) -> PlueckerRay {
        pixel_to_ray(px, self)
    }

    /// Full `K [R | t]` projection matrix.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        self.intrinsics.matrix() * self.extrinsics.matrix3x4()
    }
}

/// Pinhole projection of a world point to pixels.
pub fn project(p: &Point3, cam: &Camera) -> Result<Pixel, GeometryError> {
    let pc = cam.extrinsics.to_camera(p);
    if pc.z <= MIN_DEPTH_MM {
        return Err(GeometryError::PointBehindCamera { depth: pc.z });
    }
    Ok(cam.intrinsics.project_camera_point(&pc))
}

/// Ray from the optical center through `px`, in world Plücker coordinates.
pub fn pixel_to_ray(px: &Pixel, cam: &Camera) -> PlueckerRay {
    let r = cam.extrinsics.rotation_matrix();
    let dir = r.transpose() * cam.intrinsics.unproject(px);
    PlueckerRay::from_point_direction(&cam.extrinsics.center(), &dir)
}

/// On-disk form of a camera (`cameras.json` entries).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
    #[serde(default)]
    pub rotation: [f64; 3],
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "default_initialized")]
    pub initialized: bool,
}

fn default_initialized() -> bool {
    true
}

impl TryFrom<CameraRecord> for Camera {
    type Error = GeometryError;

    fn try_from(r: CameraRecord) -> Result<Self, Self::Error> {
        let intrinsics = Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.skew)?;
        let rotation = Vector3::from(r.rotation);
        let translation = Vector3::from(r.translation);
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("camera extrinsics"));
        }
        Ok(Camera {
            id: r.id,
            intrinsics,
            extrinsics: if rotation.norm() <= std::f64::consts::PI {
                Extrinsics { rotation, translation }
            } else {
                Extrinsics::new(rotation, translation)
            },
            initialized: r.initialized,
        })
    }
}

impl From<Camera> for CameraRecord {
    fn from(c: Camera) -> Self {
        let k = c.intrinsics;
        CameraRecord {
            id: c.id,
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            skew: k.skew,
            rotation: c.extrinsics.rotation.into(),
            translation: c.extrinsics.translation.into(),
            initialized: c.initialized,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simple_camera() -> Camera {
        let k = Intrinsics::new(1000.0, 1000.0, 500.0, 500.0, 0.0).unwrap();
        Camera::new(0, k, Extrinsics::identity())
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let px = simple_camera().project(&Vector3::new(0.0, 0.0, 2000.0)).unwrap();
        assert_eq!(px, Vector2::new(500.0, 500.0));
    }

    #[test]
    fn similar_triangles() {
        let px = simple_camera().project(&Vector3::new(100.0, 0.0, 1000.0)).unwrap();
        assert!((px - Vector2::new(600.0, 500.0)).norm() < 1e-12);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let cam = simple_camera();
        assert!(matches!(cam.project(&Vector3::new(0.0, 0.0, -5.0)), Err(GeometryError::PointBehindCamera { .. })));
        assert!(cam.project(&Vector3::new(0.0, 0.0, 1e-7)).is_err());
    }

    #[test]
    fn projection_matches_homogeneous_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let k = Intrinsics::new(
                rng.random_range(300.0..2000.0),
                rng.random_range(300.0..2000.0),
                rng.random_range(0.0..1000.0),
                rng.random_range(0.0..1000.0),
                rng.random_range(-2.0..2.0),
            )
            .unwrap();
            let w = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let cam = Camera::new(0, k, Extrinsics::new(w, Vector3::new(10.0, -20.0, 3000.0)));
            let p = Vector3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
            let h = cam.projection_matrix() * Vector4::new(p.x, p.y, p.z, 1.0);
            let oracle = Vector2::new(h.x / h.z, h.y / h.z);
            let px = cam.project(&p).unwrap();
            assert!((px - oracle).norm() < 1e-9 * (1.0 + oracle.norm()));
        }
    }

    #[test]
    fn inverse_intrinsics_is_exact_inverse() {
        let k = Intrinsics::new(900.0, 950.0, 320.0, 240.0, 1.5).unwrap();
        assert!((k.matrix() * k.inverse_matrix() - Matrix3::identity()).norm() < 1e-14);
    }

    #[test]
    fn principal_ray_through_origin() {
        let ray = simple_camera().pixel_to_ray(&Vector2::new(500.0, 500.0));
        assert!((ray.n - Vector3::z()).norm() < 1e-15);
        assert!(ray.l.norm() < 1e-15);
    }

    #[test]
    fn ray_round_trips_through_projection() {
        let k = Intrinsics::new(1100.0, 1080.0, 960.0, 540.0, 0.3).unwrap();
        let ext = Extrinsics::from_center(&so3::exp(&Vector3::new(0.2, -0.4, 0.1)), &Vector3::new(400.0, -1200.0, 1500.0));
        let cam = Camera::new(1, k, ext);
        let c = ext.center();
        for px in [Vector2::new(10.0, 20.0), Vector2::new(960.0, 540.0), Vector2::new(1900.0, 1000.0)] {
            let ray = cam.pixel_to_ray(&px);
            for s in [500.0, 2000.0] {
                let back = cam.project(&(c + ray.n * s)).unwrap();
                assert!((back - px).norm() < 1e-9, "{back:?} vs {px:?}");
            }
        }
    }

    #[test]
    fn translated_camera_moment_is_center_cross_direction() {
        let k = Intrinsics::new(1000.0, 1000.0, 500.0, 500.0, 0.0).unwrap();
        let c = Vector3::new(100.0, 200.0, -50.0);
        let cam = Camera::new(0, k, Extrinsics::from_center(&Matrix3::identity(), &c));
        let ray = cam.pixel_to_ray(&Vector2::new(700.0, 300.0));
        assert!((ray.l - c.cross(&ray.n)).norm() < 1e-12);
    }

    #[test]
    fn camera_record_round_trip() {
        let cam = Camera::new(
            3,
            Intrinsics::new(1000.0, 1001.0, 500.0, 400.0, 0.0).unwrap(),
            Extrinsics::new(Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0, 2.0, 3.0)),
        );
        let text = serde_json::to_string(&cam).unwrap();
        let back: Camera = serde_json::from_str(&text).unwrap();
        assert_eq!(back.id, 3);
        assert!((back.extrinsics.rotation - cam.extrinsics.rotation).norm() < 1e-15);
        assert!(serde_json::from_str::<Camera>(r#"{"id":0,"fx":-1,"fy":1,"cx":0,"cy":0}"#).is_err());
    }
}
