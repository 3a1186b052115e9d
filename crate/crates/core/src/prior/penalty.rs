//! Second-difference smoothness penalty on latent codes.

use nalgebra::DMatrix;

use super::PriorError;

/// `Σ_{t=1}^{T-2} ‖z_{t+1} − 2 z_t + z_{t−1}‖²` (rows are frames) and its gradient.
pub fn latent_linear_penalty(z: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>), PriorError> {
    let t = z.nrows();
    if t < 3 {
        return Err(PriorError::TooShort(t));
    }
    let mut value = 0.0;
    let mut grad = DMatrix::zeros(t, z.ncols());
    for f in 1..t - 1 {
        for c in 0..z.ncols() {
            let d = z[(f + 1, c)] - 2.0 * z[(f, c)] + z[(f - 1, c)];
            value += d * d;
            grad[(f + 1, c)] += 2.0 * d;
            grad[(f, c)] -= 4.0 * d;
            grad[(f - 1, c)] += 2.0 * d;
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(z: &DMatrix<f64>) -> f64 {
        (1..z.nrows() - 1).map(|t| (z.row(t + 1) - z.row(t) * 2.0 + z.row(t - 1)).norm_squared()).sum()
    }

    #[test]
    fn vanishes_on_constant_and_affine_codes() {
        let a = DMatrix::from_fn(1, 32, |_, c| c as f64 * 0.3 - 2.0);
        let b = DMatrix::from_fn(1, 32, |_, c| (c as f64).sin());
        let constant = DMatrix::from_fn(10, 32, |_, c| a[(0, c)]);
        let ramp = DMatrix::from_fn(10, 32, |t, c| a[(0, c)] + b[(0, c)] * t as f64);
        assert_eq!(latent_linear_penalty(&constant).unwrap().0, 0.0);
        assert!(latent_linear_penalty(&ramp).unwrap().0 < 1e-20);
    }

    #[test]
    fn short_sequences_are_rejected() {
        assert_eq!(latent_linear_penalty(&DMatrix::zeros(2, 32)).unwrap_err(), PriorError::TooShort(2));
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_finite_differences(seed in 0u64..1000, t in 3usize..12) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let z = DMatrix::from_fn(t, 4, |_, _| rng.random_range(-2.0..2.0));
            let (v, g) = latent_linear_penalty(&z).unwrap();
            prop_assert!((v - brute(&z)).abs() <= 1e-12 * (1.0 + v));
            let shift = DMatrix::from_fn(t, 4, |_, c| c as f64 * 7.5);
            let (vs, _) = latent_linear_penalty(&(&z + shift)).unwrap();
            prop_assert!((vs - v).abs() <= 1e-9 * (1.0 + v));
            for f in 0..t {
                for c in 0..4 {
                    let h = 1e-6;
                    let (mut a, mut b) = (z.clone(), z.clone());
                    a[(f, c)] += h;
                    b[(f, c)] -= h;
                    let fd = (brute(&a) - brute(&b)) / (2.0 * h);
                    prop_assert!((fd - g[(f, c)]).abs() <= 1e-6 * (1.0 + fd.abs()));
                }
            }
        }
    }
}
