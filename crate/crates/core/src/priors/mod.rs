//! Semi-algebraic signal priors and generic mixing samplers.

mod dimension;
mod mixing;
mod network;
mod sparse;

pub use dimension::{estimate_image_dimension, estimate_image_dimension_with_tol, DimensionEstimate, RANK_REL_TOL};
pub use mixing::{sample_mixing, MAX_MIXING_ATTEMPTS};
pub use network::{generator_forward, Activation, GeneratorNetwork, Layer};
pub use sparse::{sample_sparse, SparseKind, SparsePrior};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::error::Result;
use crate::rng;

/// A prior model: the set of signals the search and recovery routines range over.
#[derive(Clone, Debug)]
pub enum PriorModel {
    Generator(GeneratorNetwork),
    Sparse(SparsePrior),
    /// All of `R^N`.
    Full(usize),
}

impl PriorModel {
    pub fn output_dim(&self) -> usize {
        match self {
            PriorModel::Generator(net) => net.output_dim(),
            PriorModel::Sparse(p) => p.dim(),
            PriorModel::Full(n) => *n,
        }
    }

    /// Dimension of the latent parametrisation of one chart.
    pub fn latent_dim(&self) -> usize {
        match self {
            PriorModel::Generator(net) => net.latent_dim(),
            PriorModel::Sparse(p) => p.sparsity(),
            PriorModel::Full(n) => *n,
        }
    }

    /// Draw a chart: sparse priors pick a uniformly random support, other
    /// priors have a single global chart.
    pub fn random_chart<R: Rng + ?Sized>(&self, rng: &mut R) -> PriorChart<'_> {
        match self {
            PriorModel::Generator(net) => PriorChart::Generator(net),
            PriorModel::Full(n) => PriorChart::Identity(*n),
            PriorModel::Sparse(p) => {
                let mut support = index::sample(rng, p.dim(), p.sparsity()).into_vec();
                support.sort_unstable();
                PriorChart::Linear(p.basis().select_columns(&support))
            }
        }
    }

    /// Every chart of the prior (one per support for sparse priors).
    pub fn charts(&self) -> Vec<PriorChart<'_>> {
        match self {
            PriorModel::Sparse(p) => sparse::supports(p.dim(), p.sparsity())
                .into_iter()
                .map(|s| PriorChart::Linear(p.basis().select_columns(&s)))
                .collect(),
            PriorModel::Generator(net) => vec![PriorChart::Generator(net)],
            PriorModel::Full(n) => vec![PriorChart::Identity(*n)],
        }
    }
}

/// A smooth (piecewise-smooth for ReLU nets) parametrisation `z -> x(z)` of
/// part of a prior.
#[derive(Clone, Debug)]
pub enum PriorChart<'a> {
    Generator(&'a GeneratorNetwork),
    /// `x = B_S c` for the basis columns `B_S` of a fixed support.
    Linear(DMatrix<f64>),
    Identity(usize),
}

impl PriorChart<'_> {
    pub fn latent_dim(&self) -> usize {
        match self {
            PriorChart::Generator(net) => net.latent_dim(),
            PriorChart::Linear(b) => b.ncols(),
            PriorChart::Identity(n) => *n,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PriorChart::Generator(net) => net.output_dim(),
            PriorChart::Linear(b) => b.nrows(),
            PriorChart::Identity(n) => *n,
        }
    }

    pub fn point(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            PriorChart::Generator(net) => net.forward_vec(z),
            PriorChart::Linear(b) => b * z,
            PriorChart::Identity(_) => z.clone(),
        }
    }

    /// `(x(z), dx/dz)`.
    pub fn point_and_jacobian(&self, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        match self {
            PriorChart::Generator(net) => net.forward_with_jacobian(z),
            PriorChart::Linear(b) => (b * z, b.clone()),
            PriorChart::Identity(n) => (z.clone(), DMatrix::identity(*n, *n)),
        }
    }

    pub fn random_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        rng::gaussian_vector(rng, self.latent_dim())
    }
}

/// Random point of the prior: Gaussian latent through a random chart.
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorModel, rng: &mut R) -> Result<DVector<f64>> {
    let chart = prior.random_chart(rng);
    let z = chart.random_latent(rng);
    Ok(chart.point(&z))
}
