//! Damped Gauss–Newton (Levenberg–Marquardt) for small dense least-squares
//! problems `min_p |r(p)|^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once `|r|` falls below this.
    pub residual_tol: f64,
    /// Stop when a step changes the parameters by less than
    /// `step_tol * (1 + |p|)`.
    pub step_tol: f64,
    pub initial_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            residual_tol: 1e-15,
            step_tol: 1e-15,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub params: DVector<f64>,
    pub residual: DVector<f64>,
    pub iterations: usize,
    /// The iteration stopped on a tolerance rather than the iteration cap.
    pub converged: bool,
}

impl SolveOutcome {
    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Minimise `|r(p)|^2` from `p0`. `f` returns the residual and its Jacobian.
///
/// Steps solve `(J^T J + mu D) d = -J^T r` with `D` the diagonal of `J^T J`
/// floored at a small multiple of its largest entry; `mu` shrinks after an
/// accepted step and grows after a rejected one.
pub fn levenberg_marquardt<F>(f: F, p0: DVector<f64>, cfg: &SolverConfig) -> SolveOutcome
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut p = p0;
    let (mut r, mut jac) = f(&p);
    let mut cost = r.norm_squared();
    let mut mu = cfg.initial_damping;
    let n = p.len();

    for it in 0..cfg.max_iterations {
        if !cost.is_finite() {
            break;
        }
        if r.norm() <= cfg.residual_tol {
            return SolveOutcome {
                params: p,
                residual: r,
                iterations: it,
                converged: true,
            };
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() <= f64::EPSILON * f64::EPSILON {
            break;
        }
        let diag_max = (0..n).map(|i| jtj[(i, i)]).fold(0.0_f64, f64::max).max(1e-300);

        let mut accepted = false;
        for _ in 0..60 {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += mu * jtj[(i, i)].max(1e-12 * diag_max);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial = &p + &step;
            let (r_new, jac_new) = f(&trial);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                let small = step.norm() <= cfg.step_tol * (1.0 + p.norm());
                p = trial;
                r = r_new;
                jac = jac_new;
                cost = cost_new;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                if small {
                    return SolveOutcome {
                        params: p,
                        residual: r,
                        iterations: it + 1,
                        converged: true,
                    };
                }
                break;
            }
            mu *= 4.0;
            if mu > 1e30 {
                break;
            }
        }
        if !accepted {
            // no descent direction left at this precision: a stationary point
            return SolveOutcome {
                params: p,
                residual: r,
                iterations: it + 1,
                converged: true,
            };
        }
    }
    let converged = r.norm() <= cfg.residual_tol;
    SolveOutcome {
        params: p,
        residual: r,
        iterations: cfg.max_iterations,
        converged,
    }
}
