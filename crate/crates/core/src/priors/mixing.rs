use crate::error::{Error, Result};
use crate::linalg;
use crate::measurements::{MixingKind, MixingMatrix};
use crate::rng;

pub const MAX_MIXING_ATTEMPTS: usize = 16;

/// Random mixing matrix.
///
/// `GeneralLinear` draws i.i.d. standard Gaussian entries. `SpecialOrthogonal`
/// orthonormalises a Gaussian matrix with the QR sign ambiguity fixed, which is
/// Haar on O(N), and negates the first row when the determinant is -1, giving
/// Haar on SO(N).
pub fn sample_mixing(n: usize, kind: MixingKind, seed: u64) -> Result<MixingMatrix> {
    if n == 0 {
        return Err(Error::InvalidDimension("N must be at least 1".into()));
    }
    let mut last_err = None;
    for attempt in 0..MAX_MIXING_ATTEMPTS {
        let mut rng = rng::stream(seed, attempt as u64);
        let g = rng::gaussian_matrix(&mut rng, n, n);
        let candidate = match kind {
            MixingKind::GeneralLinear => g,
            MixingKind::SpecialOrthogonal => {
                let mut q = linalg::orthonormal_factor(&g);
                if q.determinant() < 0.0 {
                    q.row_mut(0).neg_mut();
                }
                q
            }
        };
        match MixingMatrix::new(candidate, kind) {
            Ok(m) => return Ok(m),
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::RetryExhausted {
        attempts: MAX_MIXING_ATTEMPTS,
        detail: last_err.map_or_else(String::new, |e| e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_orthogonal_contract() {
        for seed in 0..1000 {
            let n = 1 + (seed as usize % 12);
            let a = sample_mixing(n, MixingKind::SpecialOrthogonal, seed).unwrap();
            assert!(linalg::orthogonality_defect(a.entries()) < 1e-10);
            assert!((a.entries().determinant() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn general_linear_is_reproducible() {
        let a = sample_mixing(7, MixingKind::GeneralLinear, 42).unwrap();
        let b = sample_mixing(7, MixingKind::GeneralLinear, 42).unwrap();
        let ab: Vec<u64> = a.entries().iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = b.entries().iter().map(|v| v.to_bits()).collect();
        assert_eq!(ab, bb);
        assert_ne!(a, sample_mixing(7, MixingKind::GeneralLinear, 43).unwrap());
    }

    #[test]
    fn so2_angles_are_uniform() {
        let draws = 100_000;
        let mut angles: Vec<f64> = (0..draws)
            .map(|s| {
                let a = sample_mixing(2, MixingKind::SpecialOrthogonal, s).unwrap();
                let m = a.entries();
                (m[(1, 0)].atan2(m[(0, 0)]) + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
            })
            .collect();
        angles.sort_by(|a, b| a.total_cmp(b));
        let ks = angles
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let lo = i as f64 / draws as f64;
                let hi = (i + 1) as f64 / draws as f64;
                (u - lo).abs().max((hi - u).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(sample_mixing(0, MixingKind::GeneralLinear, 0).is_err());
    }
}
