//! Empirical checks of injectivity: collision searches over priors, a grid
//! oracle for tiny latent spaces, codimension probes of the confusion sets
//! `{A : P(x;A) = P(y;A)}` and threshold sweeps.

mod codim;
mod collision;
mod oracle;
mod sweep;

pub use codim::{
    ambient_dim, codimension_probe, codimension_probe_with, theoretical_bound, CodimConfig, CodimensionEstimate,
};
pub use collision::{
    assess_pair, collision_search, collision_search_anchored, collision_search_with, pair_metrics, CollisionConfig,
    CollisionReport, Verdict, DEFAULT_RESTARTS, RESIDUAL_TOL, SEPARATION_TOL,
};
pub use oracle::{
    brute_force_collision_oracle, brute_force_oracle_with, OracleConfig, OracleOutcome, MAX_GRID_POINTS_PER_AXIS,
};
pub use sweep::{
    regime, sweep_instance, threshold_sweep, write_sweep_csv, PriorFamily, Regime, SweepCell, SweepConfig, SweepRow,
    SweepTable, SWEEP_CSV_HEADER,
};
