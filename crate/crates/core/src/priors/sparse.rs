use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurements::{MixingKind, Signal, ORTHOGONALITY_TOL};
use crate::rng;

use super::mixing::sample_mixing;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparseKind {
    StandardBasis,
    GenericOrthonormal,
    GenericLinear,
}

/// Signals that are `M`-sparse in the columns of an invertible basis `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseFile", into = "SparseFile")]
pub struct SparsePrior {
    basis: DMatrix<f64>,
    sparsity: usize,
    kind: SparseKind,
}

impl SparsePrior {
    pub fn new(basis: DMatrix<f64>, sparsity: usize, kind: SparseKind) -> Result<Self> {
        let n = basis.nrows();
        if !basis.is_square() || n == 0 {
            return Err(Error::InvalidDimension(format!(
                "sparse basis must be square and non-empty, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        if sparsity == 0 || sparsity > n {
            return Err(Error::InvalidParameter(format!(
                "sparsity must lie in 1..={n}, got {sparsity}"
            )));
        }
        if kind == SparseKind::GenericOrthonormal {
            let defect = linalg::orthogonality_defect(&basis);
            if defect > ORTHOGONALITY_TOL {
                return Err(Error::InvalidInput(format!(
                    "orthonormal basis has max |B^T B - I| = {defect:e}"
                )));
            }
        }
        Ok(Self { basis, sparsity, kind })
    }

    pub fn standard(n: usize, sparsity: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n), sparsity, SparseKind::StandardBasis)
    }

    /// Haar-random orthonormal basis.
    pub fn generic_orthonormal(n: usize, sparsity: usize, seed: u64) -> Result<Self> {
        let b = sample_mixing(n, MixingKind::SpecialOrthogonal, seed)?;
        Self::new(b.entries().clone(), sparsity, SparseKind::GenericOrthonormal)
    }

    /// Gaussian (almost surely invertible) basis.
    pub fn generic_linear(n: usize, sparsity: usize, seed: u64) -> Result<Self> {
        let b = sample_mixing(n, MixingKind::GeneralLinear, seed)?;
        Self::new(b.entries().clone(), sparsity, SparseKind::GenericLinear)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn kind(&self) -> SparseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sparse prior serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `B s` with a uniformly random size-`M` support and i.i.d. standard Gaussian
/// non-zero coefficients.
pub fn sample_sparse(prior: &SparsePrior, seed: u64) -> Signal {
    let mut rng = rng::stream(seed, 0);
    let support = index::sample(&mut rng, prior.dim(), prior.sparsity);
    let values = rng::gaussian_vector(&mut rng, prior.sparsity);
    let mut coeffs = DVector::zeros(prior.dim());
    for (i, v) in support.iter().zip(values.iter()) {
        coeffs[i] = *v;
    }
    Signal::new(&prior.basis * coeffs)
}

/// All size-`m` subsets of `0..n` in lexicographic order.
pub(crate) fn supports(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < m - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut Vec::with_capacity(m), &mut out);
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SparseFile {
    basis: Vec<f64>,
    sparsity: usize,
    kind: SparseKind,
}

impl TryFrom<SparseFile> for SparsePrior {
    type Error = Error;

    fn try_from(f: SparseFile) -> Result<Self> {
        let n = (f.basis.len() as f64).sqrt().round() as usize;
        if n * n != f.basis.len() {
            return Err(Error::Format(format!(
                "basis has {} entries, not a square matrix",
                f.basis.len()
            )));
        }
        SparsePrior::new(DMatrix::from_row_slice(n, n, &f.basis), f.sparsity, f.kind)
    }
}

impl From<SparsePrior> for SparseFile {
    fn from(p: SparsePrior) -> Self {
        SparseFile {
            basis: p.basis.transpose().as_slice().to_vec(),
            sparsity: p.sparsity,
            kind: p.kind,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::{block_structure_for_power_spectrum, second_moment_blocks};

    #[test]
    fn full_support_is_dense() {
        let p = SparsePrior::standard(6, 6).unwrap();
        let x = sample_sparse(&p, 2);
        assert!(x.as_slice().iter().all(|&v| v != 0.0));
    }

    #[test]
    fn single_support_is_scaled_basis_vector() {
        let p = SparsePrior::standard(7, 1).unwrap();
        let x = sample_sparse(&p, 5);
        assert_eq!(x.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn generic_orthonormal_coordinates_are_two_sparse() {
        for seed in 0..20 {
            let p = SparsePrior::generic_orthonormal(10, 2, seed).unwrap();
            let x = sample_sparse(&p, seed + 100);
            let coords = p.basis().transpose() * x.coeffs();
            let nnz = coords.iter().filter(|c| c.abs() > 1e-12).count();
            assert_eq!(nnz, 2, "seed {seed}");
        }
    }

    #[test]
    fn generic_basis_spreads_energy_over_all_blocks() {
        let blocks = block_structure_for_power_spectrum(10).unwrap();
        for seed in 0..100 {
            let p = SparsePrior::generic_orthonormal(10, 2, 1000 + seed).unwrap();
            let m = second_moment_blocks(&sample_sparse(&p, seed), &blocks).unwrap();
            assert!(m.as_slice().iter().all(|&v| v > 0.0), "seed {seed}");
        }
        // standard-basis sparsity leaves most blocks empty
        let p = SparsePrior::standard(10, 2).unwrap();
        let m = second_moment_blocks(&sample_sparse(&p, 1), &blocks).unwrap();
        assert!(m.as_slice().iter().filter(|&&v| v == 0.0).count() >= 3);
    }

    #[test]
    fn validation() {
        assert!(SparsePrior::standard(4, 0).is_err());
        assert!(SparsePrior::standard(4, 5).is_err());
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(SparsePrior::new(skew.clone(), 1, SparseKind::GenericOrthonormal).is_err());
        assert!(SparsePrior::new(skew, 1, SparseKind::GenericLinear).is_ok());
    }

    #[test]
    fn support_enumeration() {
        let s = supports(5, 2);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0], vec![0, 1]);
        assert_eq!(s[9], vec![3, 4]);
        assert_eq!(supports(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn json_round_trip() {
        let p = SparsePrior::generic_orthonormal(4, 2, 7).unwrap();
        let q = SparsePrior::from_json(&p.to_json()).unwrap();
        assert_eq!(q.kind(), SparseKind::GenericOrthonormal);
        assert!((q.basis() - p.basis()).amax() < 1e-15);
        assert!(SparsePrior::from_json(r#"{"basis":[1,0,0],"sparsity":1,"kind":"standard-basis"}"#).is_err());
    }
}
