use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::collision::{pair_metrics, CollisionReport, Verdict, SEPARATION_TOL};
use crate::error::{Error, Result};
use crate::measurements::{separable_values, BlockStructure, MixingMatrix, Signal};
use crate::priors::PriorModel;

pub const MAX_GRID_POINTS_PER_AXIS: usize = 200;

/// Tolerances of the grid oracle.
///
/// A grid cannot resolve exact equality, so both thresholds are expressed in
/// units of the local grid resolution: the measurement gap `g_i` (largest
/// change of `P` to a grid neighbour of point `i`) and the signal gap `h_i`
/// (same for the signal). A pair `(i, j)` is eligible when
/// `min(|x_i - x_j|, |x_i + x_j|)` exceeds `separation_factor * (h_i + h_j)`
/// and, relative to `max(|x_i|, |x_j|)`, also exceeds `separation_tol`. It
/// counts as a collision when `|P_i - P_j| <= residual_factor * (g_i + g_j)`.
/// Points with norm below `min_norm_fraction` of the largest are skipped:
/// near the origin every pair is within a few grid cells of the sign orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub separation_tol: f64,
    pub separation_factor: f64,
    pub residual_factor: f64,
    pub min_norm_fraction: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            separation_tol: SEPARATION_TOL,
            separation_factor: 3.0,
            residual_factor: 0.05,
            min_norm_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleOutcome {
    pub report: CollisionReport,
    /// `|P_i - P_j| / (g_i + g_j)` of the reported pair.
    pub score: f64,
    pub points: usize,
}

/// Exhaustive grid check for priors with at most two latent coordinates.
pub fn brute_force_collision_oracle(
    prior: &PriorModel,
    a: &MixingMatrix,
    blocks: &BlockStructure,
    grid_points_per_axis: usize,
) -> Result<CollisionReport> {
    Ok(brute_force_oracle_with(prior, a, blocks, grid_points_per_axis, &OracleConfig::default())?.report)
}

pub fn brute_force_oracle_with(
    prior: &PriorModel,
    a: &MixingMatrix,
    blocks: &BlockStructure,
    grid_points_per_axis: usize,
    cfg: &OracleConfig,
) -> Result<OracleOutcome> {
    let k = prior.latent_dim();
    if k > 2 {
        return Err(Error::Unsupported(format!(
            "grid oracle needs latent dimension <= 2, got {k}"
        )));
    }
    let g = grid_points_per_axis;
    if !(2..=MAX_GRID_POINTS_PER_AXIS).contains(&g) {
        return Err(Error::InvalidParameter(format!(
            "grid points per axis must lie in 2..={MAX_GRID_POINTS_PER_AXIS}, got {g}"
        )));
    }
    let n = prior.output_dim();
    if blocks.dim() != n || a.dim() != n {
        return Err(Error::mismatch("oracle dimensions", n, blocks.dim().max(a.dim())));
    }
    let r = blocks.count();

    let axis: Vec<f64> = (0..g).map(|i| -1.0 + 2.0 * i as f64 / (g - 1) as f64).collect();
    let per_chart = g.pow(k as u32);
    // flat row-major storage: point i occupies xs[i*n..] and ps[i*r..]
    let mut xs: Vec<f64> = Vec::new();
    let mut ps: Vec<f64> = Vec::new();
    let mut neighbours: Vec<Vec<usize>> = Vec::new();
    for chart in prior.charts() {
        let base = neighbours.len();
        for idx in 0..per_chart {
            let (i0, i1) = (idx % g, idx / g);
            let z = match k {
                0 => DVector::zeros(0),
                1 => DVector::from_element(1, axis[i0]),
                _ => DVector::from_vec(vec![axis[i0], axis[i1]]),
            };
            let x = chart.point(&z);
            ps.extend_from_slice(separable_values(&x, a.entries(), blocks).as_slice());
            xs.extend_from_slice(x.as_slice());
            let mut nb = Vec::with_capacity(4);
            if k >= 1 {
                if i0 > 0 {
                    nb.push(base + idx - 1);
                }
                if i0 + 1 < g {
                    nb.push(base + idx + 1);
                }
            }
            if k == 2 {
                if i1 > 0 {
                    nb.push(base + idx - g);
                }
                if i1 + 1 < g {
                    nb.push(base + idx + g);
                }
            }
            neighbours.push(nb);
        }
    }
    let points = neighbours.len();
    let xrow = |i: usize| &xs[i * n..(i + 1) * n];
    let prow = |i: usize| &ps[i * r..(i + 1) * r];

    let norms: Vec<f64> = (0..points)
        .map(|i| xrow(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let keep: Vec<bool> = norms
        .iter()
        .map(|&v| max_norm > 0.0 && v > cfg.min_norm_fraction * max_norm)
        .collect();
    let mut mgap = vec![0.0; points];
    let mut sgap = vec![0.0; points];
    for i in 0..points {
        for &j in &neighbours[i] {
            mgap[i] = f64::max(mgap[i], dist(prow(i), prow(j)));
            sgap[i] = f64::max(sgap[i], dist(xrow(i), xrow(j)));
        }
    }

    // Sort on the sum of block energies: |sum dP| <= sqrt(R) |dP| bounds the scan window.
    let key: Vec<f64> = (0..points).map(|i| prow(i).iter().sum()).collect();
    let mut order: Vec<usize> = (0..points).filter(|&i| keep[i]).collect();
    order.sort_by(|&i, &j| key[i].total_cmp(&key[j]).then(i.cmp(&j)));
    let gmax = mgap.iter().copied().fold(0.0, f64::max);
    let window = (r as f64).sqrt() * 2.0 * gmax;

    let mut best: Option<(f64, usize, usize)> = None; // score, i, j
    for (oi, &i) in order.iter().enumerate() {
        for &j in &order[oi + 1..] {
            let best_score = best.map_or(f64::INFINITY, |b| b.0);
            if key[j] - key[i] > best_score * window {
                break;
            }
            let score = dist(prow(i), prow(j)) / (mgap[i] + mgap[j]).max(1e-300);
            if score >= best_score {
                continue;
            }
            let (xi, xj) = (xrow(i), xrow(j));
            let sep = dist(xi, xj).min(dist_plus(xi, xj));
            if sep <= cfg.separation_factor * (sgap[i] + sgap[j]) || sep <= cfg.separation_tol * norms[i].max(norms[j])
            {
                continue;
            }
            best = Some((score, i.min(j), i.max(j)));
        }
    }

    let Some((score, i, j)) = best else {
        return Ok(OracleOutcome {
            report: CollisionReport {
                x: Signal::zeros(n),
                y: Signal::zeros(n),
                residual: f64::INFINITY,
                separation: 0.0,
                verdict: Verdict::NoCollisionFound,
                restarts_used: 0,
                seed: 0,
                converged: true,
            },
            score: f64::INFINITY,
            points,
        });
    };
    let x = DVector::from_column_slice(xrow(i));
    let y = DVector::from_column_slice(xrow(j));
    let (residual, separation) = pair_metrics(&x, &y, a.entries(), blocks);
    let verdict = if score <= cfg.residual_factor {
        Verdict::Collision
    } else {
        Verdict::NoCollisionFound
    };
    Ok(OracleOutcome {
        report: CollisionReport {
            x: Signal::new(x),
            y: Signal::new(y),
            residual,
            separation,
            verdict,
            restarts_used: 0,
            seed: 0,
            converged: true,
        },
        score,
        points,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn dist_plus(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u + v) * (u + v)).sum::<f64>().sqrt()
}
