use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurements::{separable_values, BlockStructure, MixingKind, Signal};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodimConfig {
    pub max_restarts: usize,
    pub max_iterations: usize,
    /// A restart counts as converged once the constraint residual drops below this.
    pub residual_tol: f64,
    /// Singular values above `rank_tol * largest` count toward the rank.
    pub rank_tol: f64,
}

impl Default for CodimConfig {
    fn default() -> Self {
        Self {
            max_restarts: 50,
            max_iterations: 100,
            residual_tol: 1e-9,
            rank_tol: 1e-6,
        }
    }
}

/// Local dimension of `{A : P(x;A) = P(y;A)}` at a numerically found solution.
#[derive(Clone, Debug, Serialize)]
pub struct CodimensionEstimate {
    pub ambient_dim: usize,
    pub estimated_solution_dim: usize,
    pub theoretical_bound: usize,
    pub singular_values: Vec<f64>,
    pub converged: bool,
    /// Constraint residual `|P(x;A) - P(y;A)|` at the returned point.
    pub residual: f64,
    pub restarts_used: usize,
    #[serde(skip)]
    pub solution: DMatrix<f64>,
}

/// Dimension bound for the confusion set of a non-equivalent pair.
///
/// The `R` block constraints are independent on `GL(N)`, giving `N^2 - R`.
/// On `SO(N)` their sum is `|x|^2 - |y|^2` for every `A`, so at most `R - 1`
/// of them are independent and the bound is `N(N-1)/2 - (R - 1)`. For the
/// power spectrum `R = floor(N/2) + 1`.
pub fn theoretical_bound(manifold: MixingKind, blocks: &BlockStructure) -> usize {
    let n = blocks.dim();
    let r = blocks.count();
    match manifold {
        MixingKind::GeneralLinear => n * n - r,
        MixingKind::SpecialOrthogonal => n * (n - 1) / 2 - (r - 1),
    }
}

pub fn ambient_dim(manifold: MixingKind, n: usize) -> usize {
    match manifold {
        MixingKind::GeneralLinear => n * n,
        MixingKind::SpecialOrthogonal => n * (n - 1) / 2,
    }
}

pub fn codimension_probe(
    x: &Signal,
    y: &Signal,
    manifold: MixingKind,
    blocks: &BlockStructure,
    seed: u64,
) -> Result<CodimensionEstimate> {
    codimension_probe_with(x, y, manifold, blocks, seed, &CodimConfig::default())
}

/// Find `A` on the manifold with `P(x;A) = P(y;A)` by minimum-norm Gauss–Newton
/// steps, then read off `tangent dimension - rank` of the constraint Jacobian.
///
/// On `SO(N)` the tangent space at `A` is `{A Omega : Omega skew}` and steps are
/// retracted by orthonormalising `A (I + Omega)`, which keeps `det A = 1`.
pub fn codimension_probe_with(
    x: &Signal,
    y: &Signal,
    manifold: MixingKind,
    blocks: &BlockStructure,
    seed: u64,
    cfg: &CodimConfig,
) -> Result<CodimensionEstimate> {
    let n = blocks.dim();
    if x.len() != n || y.len() != n {
        return Err(Error::mismatch("codimension probe", n, x.len().max(y.len())));
    }
    let (xv, yv) = (x.coeffs(), y.coeffs());
    if linalg::sign_aligned_distance(xv, yv) <= 1e-6 {
        return Err(Error::InvalidInput("x and y agree up to sign".into()));
    }
    let ambient = ambient_dim(manifold, n);
    let bound = theoretical_bound(manifold, blocks);
    let scale = xv.norm_squared().max(yv.norm_squared());

    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut restarts_used = 0;
    let feasible =
        manifold == MixingKind::GeneralLinear || (xv.norm_squared() - yv.norm_squared()).abs() <= 1e-12 * scale;
    if feasible {
        for restart in 0..cfg.max_restarts {
            restarts_used = restart + 1;
            let mut rng = rng::stream(seed, restart as u64);
            let g = rng::gaussian_matrix(&mut rng, n, n);
            let mut a = match manifold {
                MixingKind::GeneralLinear => g,
                MixingKind::SpecialOrthogonal => {
                    let mut q = linalg::orthonormal_factor(&g);
                    if q.determinant() < 0.0 {
                        q.row_mut(0).neg_mut();
                    }
                    q
                }
            };
            let mut res = constraint(xv, yv, &a, blocks).norm();
            for _ in 0..cfg.max_iterations {
                if res <= 1e-14 * scale {
                    break;
                }
                let c = constraint(xv, yv, &a, blocks);
                let jac = tangent_jacobian(xv, yv, &a, blocks, manifold);
                let svd = jac.svd(true, true);
                let eps = 1e-12 * svd.singular_values.max();
                let step = match svd.solve(&c, eps) {
                    Ok(s) => -s,
                    Err(_) => break,
                };
                let next = retract(&a, &step, manifold);
                let next_res = constraint(xv, yv, &next, blocks).norm();
                if !next_res.is_finite() || next_res >= res {
                    break;
                }
                a = next;
                res = next_res;
            }
            let done = res <= cfg.residual_tol * scale.max(1.0) && nondegenerate(&a, manifold);
            if best.as_ref().is_none_or(|(r, _)| res < *r) {
                best = Some((res, a));
            }
            if done {
                break;
            }
        }
    }

    let (residual, solution) = best.unwrap_or((f64::INFINITY, DMatrix::identity(n, n)));
    let converged = residual <= cfg.residual_tol * scale.max(1.0) && nondegenerate(&solution, manifold);
    let jac = tangent_jacobian(xv, yv, &solution, blocks, manifold);
    let singular_values = linalg::singular_values(&jac);
    let rank = linalg::numerical_rank(&singular_values, cfg.rank_tol);
    Ok(CodimensionEstimate {
        ambient_dim: ambient,
        estimated_solution_dim: ambient - rank,
        theoretical_bound: bound,
        singular_values,
        converged,
        residual,
        restarts_used,
        solution,
    })
}

fn nondegenerate(a: &DMatrix<f64>, manifold: MixingKind) -> bool {
    match manifold {
        MixingKind::SpecialOrthogonal => true,
        MixingKind::GeneralLinear => {
            let sv = linalg::singular_values(a);
            sv.last().copied().unwrap_or(0.0) > 1e-12 * sv[0]
        }
    }
}

/// `c(A) = P(x;A) - P(y;A)`.
pub(crate) fn constraint(
    x: &DVector<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    blocks: &BlockStructure,
) -> DVector<f64> {
    separable_values(x, a, blocks) - separable_values(y, a, blocks)
}

/// Derivative of `c` along the tangent coordinates of the manifold at `A`.
///
/// General linear: coordinates are the entries `A_jc` (row-major), and
/// `dc_k / dA_jc = 2 (<x,w_j> x_c - <y,w_j> y_c)` for `j` in block `k`.
/// Special orthogonal: coordinates `t_ab` (a < b) of `Omega = sum t_ab (E_ab - E_ba)`
/// with `A -> A (I + Omega)`, so `d(Ax) = A_{:,a} x_b - A_{:,b} x_a`.
pub(crate) fn tangent_jacobian(
    x: &DVector<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    blocks: &BlockStructure,
    manifold: MixingKind,
) -> DMatrix<f64> {
    let n = x.len();
    let ax = a * x;
    let ay = a * y;
    match manifold {
        MixingKind::GeneralLinear => {
            let mut jac = DMatrix::zeros(blocks.count(), n * n);
            for (k, r) in blocks.ranges().enumerate() {
                for j in r {
                    for c in 0..n {
                        jac[(k, j * n + c)] = 2.0 * (ax[j] * x[c] - ay[j] * y[c]);
                    }
                }
            }
            jac
        }
        MixingKind::SpecialOrthogonal => {
            let mut jac = DMatrix::zeros(blocks.count(), n * (n - 1) / 2);
            let mut col = 0;
            for p in 0..n {
                for q in p + 1..n {
                    for (k, r) in blocks.ranges().enumerate() {
                        let mut acc = 0.0;
                        for j in r {
                            let dx = a[(j, p)] * x[q] - a[(j, q)] * x[p];
                            let dy = a[(j, p)] * y[q] - a[(j, q)] * y[p];
                            acc += ax[j] * dx - ay[j] * dy;
                        }
                        jac[(k, col)] = 2.0 * acc;
                    }
                    col += 1;
                }
            }
            jac
        }
    }
}

fn retract(a: &DMatrix<f64>, step: &DVector<f64>, manifold: MixingKind) -> DMatrix<f64> {
    let n = a.nrows();
    match manifold {
        MixingKind::GeneralLinear => a + DMatrix::from_row_slice(n, n, step.as_slice()),
        MixingKind::SpecialOrthogonal => {
            let mut omega = DMatrix::zeros(n, n);
            let mut col = 0;
            for p in 0..n {
                for q in p + 1..n {
                    omega[(p, q)] = step[col];
                    omega[(q, p)] = -step[col];
                    col += 1;
                }
            }
            let moved = a * (DMatrix::identity(n, n) + omega);
            linalg::orthonormal_factor(&moved)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::block_structure_for_power_spectrum;

    fn pair(n: usize, seed: u64, equal_norm: bool) -> (Signal, Signal) {
        let mut rng = rng::stream(seed, 77);
        let x = rng::gaussian_vector(&mut rng, n);
        let mut y = rng::gaussian_vector(&mut rng, n);
        if equal_norm {
            y *= x.norm() / y.norm();
        }
        (Signal::new(x), Signal::new(y))
    }

    #[test]
    fn bounds() {
        let b8 = block_structure_for_power_spectrum(8).unwrap();
        assert_eq!(theoretical_bound(MixingKind::GeneralLinear, &b8), 59);
        let b7 = block_structure_for_power_spectrum(7).unwrap();
        assert_eq!(ambient_dim(MixingKind::SpecialOrthogonal, 7), 21);
        assert_eq!(theoretical_bound(MixingKind::SpecialOrthogonal, &b7), 18);
        let b9 = BlockStructure::new(vec![1, 3, 5]).unwrap();
        assert_eq!(theoretical_bound(MixingKind::GeneralLinear, &b9), 78);
        assert_eq!(theoretical_bound(MixingKind::SpecialOrthogonal, &b9), 34);
    }

    #[test]
    fn tangent_jacobians_match_finite_differences() {
        let blocks = BlockStructure::new(vec![1, 2, 2]).unwrap();
        let (x, y) = pair(5, 3, true);
        for manifold in [MixingKind::GeneralLinear, MixingKind::SpecialOrthogonal] {
            let a = crate::priors::sample_mixing(5, MixingKind::SpecialOrthogonal, 4).unwrap();
            let a = a.entries().clone();
            let jac = tangent_jacobian(x.coeffs(), y.coeffs(), &a, &blocks, manifold);
            let h = 1e-6;
            for col in 0..jac.ncols() {
                let mut e = DVector::zeros(jac.ncols());
                e[col] = h;
                let lin = |s: &DVector<f64>| match manifold {
                    MixingKind::GeneralLinear => &a + DMatrix::from_row_slice(5, 5, s.as_slice()),
                    MixingKind::SpecialOrthogonal => {
                        let mut om = DMatrix::zeros(5, 5);
                        let mut c = 0;
                        for p in 0..5 {
                            for q in p + 1..5 {
                                om[(p, q)] = s[c];
                                om[(q, p)] = -s[c];
                                c += 1;
                            }
                        }
                        &a * (DMatrix::identity(5, 5) + om)
                    }
                };
                let fd = (constraint(x.coeffs(), y.coeffs(), &lin(&e), &blocks)
                    - constraint(x.coeffs(), y.coeffs(), &lin(&-&e), &blocks))
                    / (2.0 * h);
                assert!((fd - jac.column(col)).amax() < 1e-7, "{manifold} col {col}");
            }
        }
    }

    #[test]
    fn retraction_stays_on_so() {
        let a = crate::priors::sample_mixing(6, MixingKind::SpecialOrthogonal, 1).unwrap();
        let step = DVector::from_fn(15, |i, _| 0.3 * (i as f64).sin());
        let b = retract(a.entries(), &step, MixingKind::SpecialOrthogonal);
        assert!(linalg::orthogonality_defect(&b) < 1e-12);
        assert!((b.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn general_linear_probe_hits_bound() {
        let blocks = block_structure_for_power_spectrum(6).unwrap();
        let (x, y) = pair(6, 1, false);
        let est = codimension_probe(&x, &y, MixingKind::GeneralLinear, &blocks, 2).unwrap();
        assert!(est.converged);
        assert!(est.residual < 1e-9);
        assert_eq!(est.estimated_solution_dim, est.theoretical_bound);
    }

    #[test]
    fn special_orthogonal_probe_hits_bound() {
        let blocks = block_structure_for_power_spectrum(7).unwrap();
        let (x, y) = pair(7, 5, true);
        let est = codimension_probe(&x, &y, MixingKind::SpecialOrthogonal, &blocks, 2).unwrap();
        assert!(est.converged, "residual {}", est.residual);
        assert_eq!(est.estimated_solution_dim, 18);
        let a = &est.solution;
        assert!(linalg::orthogonality_defect(a) < 1e-10);
        assert!((a.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unequal_norms_cannot_meet_on_so() {
        let blocks = block_structure_for_power_spectrum(5).unwrap();
        let x = Signal::from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        let y = Signal::from_slice(&[0.0, 2.0, 0.0, 0.0, 0.0]);
        let est = codimension_probe(&x, &y, MixingKind::SpecialOrthogonal, &blocks, 0).unwrap();
        assert!(!est.converged);
    }

    #[test]
    fn equivalent_pair_is_rejected() {
        let blocks = block_structure_for_power_spectrum(4).unwrap();
        let x = Signal::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert!(codimension_probe(&x, &-&x, MixingKind::GeneralLinear, &blocks, 0).is_err());
    }
}
