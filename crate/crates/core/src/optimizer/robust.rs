/// Geman-McClure kernel `ρ(r) = c²r²/(r² + c²)`, bounded above by `c²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustKernel {
    /// Pixels.
    pub scale: f64,
}

impl RobustKernel {
    pub fn new(scale: f64) -> Option<Self> {
        (scale > 0.0 && scale.is_finite()).then_some(Self { scale })
    }

    /// `(ρ(r), dρ/dr)`.
    pub fn rho(&self, r: f64) -> (f64, f64) {
        let c2 = self.scale * self.scale;
        let r2 = r * r;
        let d = r2 + c2;
        (c2 * r2 / d, 2.0 * c2 * c2 * r / (d * d))
    }

    /// `(ρ, dρ/d(r²))` from the squared residual.
    pub fn rho_sq(&self, r2: f64) -> (f64, f64) {
        let c2 = self.scale * self.scale;
        let d = r2 + c2;
        (c2 * r2 / d, c2 * c2 / (d * d))
    }
}

/// `(ρ(r), dρ/dr)` for kernel scale `c`.
pub fn robust_rho(r: f64, c: f64) -> (f64, f64) {
    RobustKernel { scale: c }.rho(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        assert_eq!(robust_rho(0.0, 100.0), (0.0, 0.0));
        assert!((robust_rho(100.0, 100.0).0 - 5000.0).abs() < 1e-9);
        let (v, d) = robust_rho(1e8, 100.0);
        assert!((v - 1e4).abs() / 1e4 < 1e-6);
        assert!(d.abs() < 1e-6);
        assert!(RobustKernel::new(0.0).is_none());
    }

    proptest! {
        #[test]
        fn derivative_matches_differences(r in -500.0f64..500.0, c in 1.0f64..300.0) {
            let h = 1e-4;
            let fd = (robust_rho(r + h, c).0 - robust_rho(r - h, c).0) / (2.0 * h);
            let (v, d) = robust_rho(r, c);
            prop_assert!((fd - d).abs() <= 1e-6 * (1.0 + d.abs()));
            prop_assert!(v >= 0.0 && v <= c * c);
            let (v2, d2) = RobustKernel { scale: c }.rho_sq(r * r);
            prop_assert!((v2 - v).abs() <= 1e-9 * (1.0 + v));
            prop_assert!((2.0 * r * d2 - d).abs() <= 1e-9 * (1.0 + d.abs()));
        }
    }
}
