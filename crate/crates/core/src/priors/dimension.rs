use serde::Serialize;

use crate::linalg;
use crate::rng;

use super::GeneratorNetwork;

/// Singular values above this fraction of the largest count toward the rank.
pub const RANK_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub value: usize,
    /// Spectrum of the Jacobian at the point attaining the maximal rank.
    pub singular_values: Vec<f64>,
    pub trials: usize,
}

/// Image dimension of a generator: the maximal numerical rank of the
/// Jacobian over `trials` Gaussian latent points.
///
/// The image is a finite union of smooth strata, so its dimension is the
/// largest stratum dimension and a max over random points recovers it.
pub fn estimate_image_dimension(net: &GeneratorNetwork, trials: usize, seed: u64) -> DimensionEstimate {
    estimate_image_dimension_with_tol(net, trials, seed, RANK_REL_TOL)
}

pub fn estimate_image_dimension_with_tol(
    net: &GeneratorNetwork,
    trials: usize,
    seed: u64,
    rel_tol: f64,
) -> DimensionEstimate {
    let trials = trials.max(1);
    let mut rng = rng::stream(seed, 0);
    let mut best = DimensionEstimate {
        value: 0,
        singular_values: Vec::new(),
        trials,
    };
    for t in 0..trials {
        let z = rng::gaussian_vector(&mut rng, net.latent_dim());
        let (_, jac) = net.forward_with_jacobian(&z);
        let sv = linalg::singular_values(&jac);
        let rank = linalg::numerical_rank(&sv, rel_tol);
        if t == 0 || rank > best.value {
            best.value = rank;
            best.singular_values = sv;
        }
    }
    best
}
