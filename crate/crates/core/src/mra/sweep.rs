//! Sample-complexity sweeps: smallest `n` reaching a target recovery error
//! as a function of the noise level.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::group::GroupAction;
use super::moments::stream_invariants;
use super::recover::{recover, recovery_error, RecoveryConfig};
use crate::error::{Error, Result};
use crate::linalg::{fitted_slope, median};
use crate::measurements::{MixingMatrix, Signal};
use crate::priors::PriorModel;
use crate::rng;

pub const MRA_SWEEP_CSV_HEADER: &str = "sigma,n_star,median_error,seeds_used";

/// Offset applied to an observation seed to obtain the recovery seed, so
/// that restarts and observations never share a random stream.
const RECOVERY_SEED_MIX: u64 = 0xa076_1d64_78bd_642f;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleComplexityConfig {
    pub target_error: f64,
    pub seeds: Vec<u64>,
    pub n_min: usize,
    pub n_cap: usize,
    /// Ratio between consecutive points of the geometric `n` grid.
    pub grid_ratio: f64,
    /// Seed of the true signal.
    pub signal_seed: u64,
    /// Rescale the true signal to this norm (positively homogeneous priors only).
    pub signal_norm: Option<f64>,
    pub recovery: RecoveryConfig,
}

impl Default for SampleComplexityConfig {
    fn default() -> Self {
        Self {
            target_error: 0.1,
            seeds: (0..10).collect(),
            n_min: 1,
            n_cap: 10_000_000,
            grid_ratio: 2f64.powf(0.25),
            signal_seed: 0,
            signal_norm: None,
            recovery: RecoveryConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleComplexityCell {
    pub sigma: f64,
    pub n_star: usize,
    pub median_error: f64,
    pub seeds_used: usize,
    /// The cap was reached without meeting the target.
    pub saturated: bool,
    /// Every `(n, median error)` evaluated by the search, sorted by `n`.
    pub evaluations: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleComplexityTable {
    pub cells: Vec<SampleComplexityCell>,
    /// Least-squares slope of `log n_star` against `log sigma` over the
    /// unsaturated cells with `sigma > 0`; `None` with fewer than two.
    pub fitted_slope: Option<f64>,
    pub true_signal: Signal,
}

/// Geometric grid `n_min, n_min r, n_min r^2, ...` rounded and deduplicated, ending at `n_cap`.
pub fn n_grid(n_min: usize, n_cap: usize, ratio: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut v = n_min.max(1) as f64;
    while (v.round() as usize) < n_cap {
        let k = v.round() as usize;
        if out.last() != Some(&k) {
            out.push(k);
        }
        v *= ratio;
    }
    out.push(n_cap);
    out
}

fn homogeneous(prior: &PriorModel) -> bool {
    match prior {
        PriorModel::Generator(net) => net.is_positively_homogeneous(),
        PriorModel::Sparse(_) | PriorModel::Full(_) => true,
    }
}

/// The true signal `A x(z)` of a sweep: the first nonzero prior sample drawn
/// from streams `0, 1, ...` of `signal_seed`, optionally rescaled.
pub fn sweep_signal(prior: &PriorModel, a: &MixingMatrix, cfg: &SampleComplexityConfig) -> Result<Signal> {
    if let Some(norm) = cfg.signal_norm {
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "signal_norm must be positive, got {norm}"
            )));
        }
        if !homogeneous(prior) {
            return Err(Error::InvalidParameter(
                "signal_norm needs a positively homogeneous prior".into(),
            ));
        }
    }
    for attempt in 0..64 {
        let mut r = rng::stream(cfg.signal_seed, attempt);
        let x = crate::priors::sample_prior(prior, &mut r)?;
        let ax = a.entries() * x;
        let nrm = ax.norm();
        if nrm > 0.0 {
            let scale = cfg.signal_norm.map_or(1.0, |t| t / nrm);
            return Ok(Signal::new(ax * scale));
        }
    }
    Err(Error::RetryExhausted {
        attempts: 64,
        detail: "prior produced only zero signals".into(),
    })
}

/// Median over seeds of the recovery error after `n` observations.
pub fn median_recovery_error(
    x_true: &Signal,
    prior: &PriorModel,
    a: &MixingMatrix,
    group: &GroupAction,
    sigma: f64,
    n: usize,
    seeds: &[u64],
    recovery: &RecoveryConfig,
) -> Result<f64> {
    let blocks = group.blocks();
    let mut errors = seeds
        .par_iter()
        .map(|&s| {
            let inv = stream_invariants(x_true, group, n, sigma, s)?;
            let rec = recover(&inv, prior, a, &blocks, recovery, s ^ RECOVERY_SEED_MIX)?;
            Ok(recovery_error(&rec.x_hat, x_true))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(median(&mut errors))
}

/// For each `sigma`, the smallest grid `n` whose median recovery error is at
/// most `target_error`, found by a galloping search followed by bisection
/// (the median error is assumed to decrease along the grid).
///
/// The true signal and the random streams are shared across noise levels,
/// and observation sets for different `n` are nested prefixes.
pub fn sample_complexity_sweep(
    prior: &PriorModel,
    a: &MixingMatrix,
    group: &GroupAction,
    sigma_list: &[f64],
    cfg: &SampleComplexityConfig,
) -> Result<SampleComplexityTable> {
    if !(cfg.target_error > 0.0 && cfg.target_error < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target_error must lie in (0, 1), got {}",
            cfg.target_error
        )));
    }
    if sigma_list.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("sigma_list must be sorted ascending".into()));
    }
    if sigma_list.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidParameter("sigma values must be finite and >= 0".into()));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    if !(cfg.grid_ratio > 1.0) || cfg.n_cap < cfg.n_min.max(1) {
        return Err(Error::InvalidParameter("need grid_ratio > 1 and n_cap >= n_min".into()));
    }
    if prior.output_dim() != group.dim() || a.dim() != group.dim() {
        return Err(Error::mismatch("prior vs group", group.dim(), prior.output_dim()));
    }
    let x_true = sweep_signal(prior, a, cfg)?;
    let grid = n_grid(cfg.n_min, cfg.n_cap, cfg.grid_ratio);

    let mut cells = Vec::with_capacity(sigma_list.len());
    for &sigma in sigma_list {
        let mut evaluations: Vec<(usize, f64)> = Vec::new();
        let mut eval = |i: usize| -> Result<f64> {
            let n = grid[i];
            if let Some(&(_, e)) = evaluations.iter().find(|(m, _)| *m == n) {
                return Ok(e);
            }
            let e = median_recovery_error(&x_true, prior, a, group, sigma, n, &cfg.seeds, &cfg.recovery)?;
            evaluations.push((n, e));
            Ok(e)
        };
        let last = grid.len() - 1;
        // gallop: 0, 1, 3, 7, ... until the target is met
        let mut lo: Option<usize> = None; // largest index known to fail
        let mut hi = None;
        let mut step = 1;
        let mut i = 0;
        loop {
            if eval(i)? <= cfg.target_error {
                hi = Some(i);
                break;
            }
            lo = Some(i);
            if i == last {
                break;
            }
            i = (i + step).min(last);
            step *= 2;
        }
        let (n_star, median_error, saturated) = match hi {
            None => (grid[last], eval(last)?, true),
            Some(mut h) => {
                let mut left = lo.map_or(0, |v| v + 1);
                while left < h {
                    let mid = (left + h) / 2;
                    if eval(mid)? <= cfg.target_error {
                        h = mid;
                    } else {
                        left = mid + 1;
                    }
                }
                (grid[h], eval(h)?, false)
            }
        };
        evaluations.sort_by_key(|p| p.0);
        cells.push(SampleComplexityCell {
            sigma,
            n_star,
            median_error,
            seeds_used: cfg.seeds.len(),
            saturated,
            evaluations,
        });
    }

    let (xs, ys): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter(|c| !c.saturated && c.sigma > 0.0)
        .map(|c| (c.sigma.ln(), (c.n_star as f64).ln()))
        .unzip();
    let fitted_slope = (xs.len() >= 2).then(|| fitted_slope(&xs, &ys));
    Ok(SampleComplexityTable {
        cells,
        fitted_slope,
        true_signal: x_true,
    })
}

/// CSV with header [`MRA_SWEEP_CSV_HEADER`], one row per noise level.
pub fn write_sample_complexity_csv<W: Write>(table: &SampleComplexityTable, mut w: W) -> Result<()> {
    writeln!(w, "{MRA_SWEEP_CSV_HEADER}")?;
    for c in &table.cells {
        writeln!(w, "{},{},{:e},{}", c.sigma, c.n_star, c.median_error, c.seeds_used)?;
    }
    Ok(())
}
