use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::collision::{collision_search_anchored, collision_search_with, CollisionConfig, Verdict};
use crate::error::Result;
use crate::measurements::{block_structure_for_power_spectrum, MixingKind, Signal};
use crate::priors::{
    estimate_image_dimension, sample_mixing, sample_prior, Activation, GeneratorNetwork, PriorModel, SparseKind,
    SparsePrior,
};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    AllSignals,
    GenericSignals,
    BelowThreshold,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::AllSignals => "all-signals",
            Regime::GenericSignals => "generic-signals",
            Regime::BelowThreshold => "below-threshold",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Uniqueness regime of the power spectrum of `A x` for an `M`-dimensional
/// prior: every signal is determined up to sign when `N >= 4M` (`4M + 2` for
/// rotations), generic signals when `N >= 2M` (`2M + 2`).
pub fn regime(n: usize, m: usize, kind: MixingKind) -> Regime {
    let extra = match kind {
        MixingKind::GeneralLinear => 0,
        MixingKind::SpecialOrthogonal => 2,
    };
    if n >= 4 * m + extra {
        Regime::AllSignals
    } else if n >= 2 * m + extra {
        Regime::GenericSignals
    } else {
        Regime::BelowThreshold
    }
}

/// Family of priors indexed by `(N, M, seed)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorFamily {
    /// Random generator with latent dimension `M`, the given hidden widths
    /// (default: one hidden layer of width `N`) and a linear output layer.
    Generator {
        #[serde(default)]
        hidden: Option<Vec<usize>>,
        #[serde(default = "default_activation")]
        activation: Activation,
    },
    Sparse {
        kind: SparseKind,
    },
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl PriorFamily {
    pub fn build(&self, n: usize, m: usize, seed: u64) -> Result<PriorModel> {
        match self {
            PriorFamily::Generator { hidden, activation } => {
                let hidden = hidden.clone().unwrap_or_else(|| vec![n]);
                Ok(PriorModel::Generator(GeneratorNetwork::random(
                    m,
                    &hidden,
                    n,
                    *activation,
                    seed,
                )?))
            }
            PriorFamily::Sparse { kind } => Ok(PriorModel::Sparse(match kind {
                SparseKind::StandardBasis => SparsePrior::standard(n, m)?,
                SparseKind::GenericOrthonormal => SparsePrior::generic_orthonormal(n, m, seed)?,
                SparseKind::GenericLinear => SparsePrior::generic_linear(n, m, seed)?,
            })),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: PriorFamily,
    /// Inclusive range of signal lengths.
    pub n_range: (usize, usize),
    /// Inclusive range of prior dimensions.
    pub m_range: (usize, usize),
    pub kind: MixingKind,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub search: CollisionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    /// Estimated prior dimension (the family parameter for sparse priors).
    pub m_hat: usize,
    pub regime: Regime,
    pub kind: MixingKind,
    pub seed: u64,
    pub verdict: Verdict,
    pub residual: f64,
    pub separation: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub n: usize,
    pub m: usize,
    pub regime: Regime,
    pub instances: usize,
    pub collisions: usize,
    pub collisions_found_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

/// Run one collision search per `(N, M, seed)`.
///
/// In the all-signals regime the search is over pairs of prior signals; in
/// the other regimes it looks for a partner of a random (hence generic) prior
/// signal. Prior, mixing and anchor are all derived from the cell seed.
pub fn threshold_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    let mut tasks = Vec::new();
    for n in cfg.n_range.0..=cfg.n_range.1 {
        for m in cfg.m_range.0..=cfg.m_range.1 {
            if m == 0 || m > n {
                continue;
            }
            for &seed in &cfg.seeds {
                tasks.push((n, m, seed));
            }
        }
    }
    let rows: Vec<SweepRow> = tasks
        .par_iter()
        .map(|&(n, m, seed)| sweep_instance(cfg, n, m, seed))
        .collect::<Result<_>>()?;

    let mut cells: Vec<SweepCell> = Vec::new();
    for row in &rows {
        match cells.iter_mut().find(|c| c.n == row.n && c.m == row.m) {
            Some(c) => {
                c.instances += 1;
                c.collisions += usize::from(row.verdict == Verdict::Collision);
            }
            None => cells.push(SweepCell {
                n: row.n,
                m: row.m,
                regime: row.regime,
                instances: 1,
                collisions: usize::from(row.verdict == Verdict::Collision),
                collisions_found_fraction: 0.0,
            }),
        }
    }
    for c in &mut cells {
        c.collisions_found_fraction = c.collisions as f64 / c.instances as f64;
    }
    Ok(SweepTable { rows, cells })
}

/// Seed offsets so that prior, mixing and search draw from unrelated streams.
const MIXING_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const ANCHOR_STREAM: u64 = 1 << 40;

pub fn sweep_instance(cfg: &SweepConfig, n: usize, m: usize, seed: u64) -> Result<SweepRow> {
    let blocks = block_structure_for_power_spectrum(n)?;
    let prior = cfg.family.build(n, m, seed)?;
    let m_hat = match &prior {
        PriorModel::Generator(net) => estimate_image_dimension(net, 20, seed).value,
        _ => m,
    };
    let a = sample_mixing(n, cfg.kind, seed ^ MIXING_SALT)?;
    let reg = regime(n, m, cfg.kind);
    let report = match reg {
        Regime::AllSignals => collision_search_with(&prior, &a, &blocks, &cfg.search, seed)?,
        _ => {
            let anchor = Signal::new(sample_prior(&prior, &mut rng::stream(seed, ANCHOR_STREAM))?);
            collision_search_anchored(&anchor, &prior, &a, &blocks, &cfg.search, seed)?
        }
    };
    Ok(SweepRow {
        n,
        m,
        m_hat,
        regime: reg,
        kind: cfg.kind,
        seed,
        verdict: report.verdict,
        residual: report.residual,
        separation: report.separation,
        converged: report.converged,
    })
}

pub const SWEEP_CSV_HEADER: &str = "N,M,regime,kind,seed,verdict,residual,separation";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:e},{:e}",
            r.n, r.m, r.regime, r.kind, r.seed, r.verdict, r.residual, r.separation
        )?;
    }
    Ok(())
}
