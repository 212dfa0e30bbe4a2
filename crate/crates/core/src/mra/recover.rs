//! Signal recovery from (estimated) invariants under a prior.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{
    separable_jacobian, separable_values, BlockStructure, MeasurementVector, MixingMatrix, Signal,
};
use crate::priors::PriorModel;
use crate::rng;
use crate::solver::{levenberg_marquardt, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub restarts: usize,
    pub solver: SolverConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            solver: SolverConfig {
                max_iterations: 200,
                ..SolverConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Recovery {
    /// `A x(z*)`.
    pub x_hat: Signal,
    pub latent: Vec<f64>,
    /// `|P(x(z*); A) - invariants|`.
    pub residual: f64,
    pub converged: bool,
    pub restarts_used: usize,
}

impl Recovery {
    /// Sign-aligned relative error against the truth.
    pub fn error(&self, x_true: &Signal) -> f64 {
        recovery_error(&self.x_hat, x_true)
    }
}

/// `min(|x_hat - x|, |x_hat + x|) / |x|`, or the absolute distance when `x = 0`.
pub fn recovery_error(x_hat: &Signal, x_true: &Signal) -> f64 {
    let d = crate::linalg::sign_aligned_distance(x_hat.coeffs(), x_true.coeffs());
    let nrm = x_true.norm();
    if nrm > 0.0 {
        d / nrm
    } else {
        d
    }
}

/// Multi-start Levenberg–Marquardt on `|P(x(z); A) - invariants|^2` over the
/// latent parameters of the prior. Restart `r` draws its chart and starting
/// point from stream `r` of `seed`; the lowest residual wins.
pub fn recover(
    invariants: &MeasurementVector,
    prior: &PriorModel,
    a: &MixingMatrix,
    blocks: &BlockStructure,
    cfg: &RecoveryConfig,
    seed: u64,
) -> Result<Recovery> {
    let n = prior.output_dim();
    if a.dim() != n || blocks.dim() != n {
        return Err(Error::mismatch("recovery dimensions", n, blocks.dim().max(a.dim())));
    }
    if invariants.len() != blocks.count() {
        return Err(Error::mismatch("invariants", blocks.count(), invariants.len()));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidParameter("recovery needs at least one restart".into()));
    }
    let target = invariants.values();
    let am = a.entries();
    let runs: Vec<(f64, bool, DVector<f64>, DVector<f64>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let chart = prior.random_chart(&mut rng);
            let z0 = chart.random_latent(&mut rng);
            let f = |z: &DVector<f64>| {
                let (x, dx) = chart.point_and_jacobian(z);
                let res = separable_values(&x, am, blocks) - target;
                (res, separable_jacobian(&x, am, blocks) * dx)
            };
            let out = levenberg_marquardt(f, z0, &cfg.solver);
            let x = chart.point(&out.params);
            (out.residual_norm(), out.converged, x, out.params)
        })
        .collect();
    let (residual, converged, x, z) = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(i.cmp(j)))
        .map(|(_, run)| run)
        .expect("at least one restart");
    Ok(Recovery {
        x_hat: Signal::new(am * x),
        latent: z.iter().copied().collect(),
        residual,
        converged,
        restarts_used: cfg.restarts,
    })
}
