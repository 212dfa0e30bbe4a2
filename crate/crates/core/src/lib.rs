//! Phase retrieval and second-moment recovery under semi-algebraic priors.
//!
//! The crate is organised around the measurement maps in [`measurements`]:
//! the power spectrum of a signal written in a real Fourier basis, its
//! generalisation to arbitrary block (irreducible) structures, and the
//! separable form `P(x; A) = m2(Ax)` obtained after a linear mixing `A`.
//!
//! On top of those sit
//!
//! * [`priors`]: ReLU-type generator networks, sparse models, Haar and
//!   Gaussian samplers for the mixing matrix, and image-dimension estimation;
//! * [`injectivity`]: collision search, a brute-force grid oracle,
//!   codimension probes for the confusion sets `{A : P(x;A) = P(y;A)}` and
//!   threshold sweeps;
//! * [`mra`]: a multi-reference alignment simulator for cyclic, dihedral and
//!   band-limited SO(3) actions, second-moment estimation, invariant
//!   extraction, recovery and sample-complexity sweeps.

pub mod error;
pub mod injectivity;
pub mod linalg;
pub mod measurements;
pub mod mra;
pub mod priors;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use measurements::{BlockStructure, MeasurementVector, MixingKind, MixingMatrix, Signal};
