//! Multi-reference alignment: observations `y = g.x + noise` of a signal
//! under random group elements, recovered through the second moment.
//!
//! For the cyclic and dihedral groups the signal is written in the real
//! Fourier basis; for SO(3) it holds the real spherical-harmonic
//! coefficients of a band-limited function. In both cases the coordinates
//! are block coordinates, so the invariants of the orbit second moment are
//! the block energies `second_moment_blocks(x)`.

mod group;
mod moments;
mod observe;
mod quadrature;
mod recover;
mod sweep;
mod wigner;

pub use group::{act, GroupAction, GroupElement, GroupKind};
pub use moments::{
    block_relative_errors, block_scalar_defect, estimate_second_moment, exact_orbit_moment, extract_invariants,
    off_block_max, stream_invariants, stream_second_moment, InvariantAccumulator, MomentAccumulator,
    SecondMomentEstimate,
};
pub use observe::{
    load_observations, read_observations, save_observations, simulate_observations, write_observations,
    MRAObservationSet, OBSERVATION_CHUNK,
};
pub use quadrature::{gauss_legendre, so3_quadrature};
pub use recover::{recover, recovery_error, Recovery, RecoveryConfig};
pub use sweep::{
    median_recovery_error, n_grid, sample_complexity_sweep, sweep_signal, write_sample_complexity_csv,
    SampleComplexityCell, SampleComplexityConfig, SampleComplexityTable, MRA_SWEEP_CSV_HEADER,
};
pub use wigner::{euler_angles, real_wigner_blocks, rotation_matrix, wigner_block, wigner_small_d, MAX_BAND_LIMIT};
