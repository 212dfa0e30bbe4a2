use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measurements::{separable_jacobian, separable_values, BlockStructure, MixingMatrix, Signal};
use crate::priors::{PriorChart, PriorModel};
use crate::rng;
use crate::solver::{levenberg_marquardt, SolverConfig};

pub const RESIDUAL_TOL: f64 = 1e-8;
pub const SEPARATION_TOL: f64 = 1e-3;
pub const DEFAULT_RESTARTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Collision,
    NoCollisionFound,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Collision => "collision",
            Verdict::NoCollisionFound => "no-collision-found",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    pub restarts: usize,
    pub residual_tol: f64,
    pub separation_tol: f64,
    /// Weight of the hinge that keeps the two candidates apart.
    pub penalty: f64,
    pub solver: SolverConfig,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            residual_tol: RESIDUAL_TOL,
            separation_tol: SEPARATION_TOL,
            penalty: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

/// Outcome of a search for `x != ±y` with `P(x; A) = P(y; A)`.
///
/// `residual` and `separation` are scale free: with `s = max(|x|, |y|)`,
/// `residual = |P(x;A) - P(y;A)| / s^2` and
/// `separation = min(|x - y|, |x + y|) / s`.
#[derive(Clone, Debug, Serialize)]
pub struct CollisionReport {
    pub x: Signal,
    pub y: Signal,
    pub residual: f64,
    pub separation: f64,
    pub verdict: Verdict,
    pub restarts_used: usize,
    pub seed: u64,
    pub converged: bool,
}

impl CollisionReport {
    /// Scale of the pair, `max(|x|, |y|)`.
    pub fn scale(&self) -> f64 {
        self.x.norm().max(self.y.norm())
    }
}

/// Scale-free residual and separation of a pair.
pub fn pair_metrics(x: &DVector<f64>, y: &DVector<f64>, a: &DMatrix<f64>, blocks: &BlockStructure) -> (f64, f64) {
    let s = x.norm().max(y.norm());
    if s == 0.0 {
        return (0.0, 0.0);
    }
    let diff = separable_values(x, a, blocks) - separable_values(y, a, blocks);
    (diff.norm() / (s * s), linalg::sign_aligned_distance(x, y) / s)
}

/// Evaluate a given pair against the collision criterion.
pub fn assess_pair(
    x: &Signal,
    y: &Signal,
    a: &MixingMatrix,
    blocks: &BlockStructure,
    cfg: &CollisionConfig,
) -> Result<CollisionReport> {
    check_dims(x.len(), a, blocks)?;
    if y.len() != x.len() {
        return Err(Error::mismatch("pair", x.len(), y.len()));
    }
    let (residual, separation) = pair_metrics(x.coeffs(), y.coeffs(), a.entries(), blocks);
    Ok(CollisionReport {
        x: x.clone(),
        y: y.clone(),
        residual,
        separation,
        verdict: verdict(residual, separation, cfg),
        restarts_used: 0,
        seed: 0,
        converged: true,
    })
}

fn verdict(residual: f64, separation: f64, cfg: &CollisionConfig) -> Verdict {
    if residual < cfg.residual_tol && separation > cfg.separation_tol {
        Verdict::Collision
    } else {
        Verdict::NoCollisionFound
    }
}

fn check_dims(n: usize, a: &MixingMatrix, blocks: &BlockStructure) -> Result<()> {
    if blocks.dim() != n {
        return Err(Error::mismatch("block structure vs prior", n, blocks.dim()));
    }
    if a.dim() != n {
        return Err(Error::mismatch("mixing matrix vs prior", n, a.dim()));
    }
    Ok(())
}

/// Multi-start search over pairs `(x(z1), x(z2))` of prior signals with the default
/// tolerances.
pub fn collision_search(
    prior: &PriorModel,
    a: &MixingMatrix,
    blocks: &BlockStructure,
    restarts: usize,
    seed: u64,
) -> Result<CollisionReport> {
    let cfg = CollisionConfig {
        restarts,
        ..CollisionConfig::default()
    };
    collision_search_with(prior, a, blocks, &cfg, seed)
}

/// Multi-start search with explicit configuration.
///
/// Each restart draws charts and latent points from `stream(seed, restart)` and
/// minimises the scale-normalised residual
/// `[(P(x1) - P(x2)) / q, sqrt(penalty) * max(0, 2 tol - sep / sqrt(q))]`
/// with `q = (|x1|^2 + |x2|^2) / 2`. The hinge sits at twice the separation
/// tolerance because `sqrt(q)` may be smaller than `max(|x1|, |x2|)` by up
/// to `sqrt 2`.
pub fn collision_search_with(
    prior: &PriorModel,
    a: &MixingMatrix,
    blocks: &BlockStructure,
    cfg: &CollisionConfig,
    seed: u64,
) -> Result<CollisionReport> {
    check_dims(prior.output_dim(), a, blocks)?;
    let candidates: Vec<Candidate> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let c1 = prior.random_chart(&mut rng);
            let c2 = prior.random_chart(&mut rng);
            let z1 = c1.random_latent(&mut rng);
            let z2 = c2.random_latent(&mut rng);
            free_restart(&c1, &c2, z1, z2, a.entries(), blocks, cfg)
        })
        .collect();
    Ok(select(candidates, cfg, seed))
}

/// Search for a partner `y = x(z)` of a fixed signal `x`.
pub fn collision_search_anchored(
    x: &Signal,
    prior: &PriorModel,
    a: &MixingMatrix,
    blocks: &BlockStructure,
    cfg: &CollisionConfig,
    seed: u64,
) -> Result<CollisionReport> {
    check_dims(prior.output_dim(), a, blocks)?;
    if x.len() != prior.output_dim() {
        return Err(Error::mismatch("anchor vs prior", prior.output_dim(), x.len()));
    }
    let candidates: Vec<Candidate> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let chart = prior.random_chart(&mut rng);
            let z = chart.random_latent(&mut rng);
            anchored_restart(x.coeffs(), &chart, z, a.entries(), blocks, cfg)
        })
        .collect();
    Ok(select(candidates, cfg, seed))
}

struct Candidate {
    x: DVector<f64>,
    y: DVector<f64>,
    residual: f64,
    separation: f64,
    converged: bool,
}

fn select(candidates: Vec<Candidate>, cfg: &CollisionConfig, seed: u64) -> CollisionReport {
    let restarts_used = candidates.len();
    let converged = candidates.iter().any(|c| c.converged);
    let rank = |c: &Candidate| {
        let v = verdict(c.residual, c.separation, cfg);
        let separated = c.separation > cfg.separation_tol;
        (v != Verdict::Collision, !separated)
    };
    let best = candidates
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            rank(a)
                .cmp(&rank(b))
                .then(a.residual.total_cmp(&b.residual))
                .then(i.cmp(j))
        })
        .map(|(_, c)| c);
    match best {
        Some(c) => CollisionReport {
            verdict: verdict(c.residual, c.separation, cfg),
            x: Signal::new(c.x),
            y: Signal::new(c.y),
            residual: c.residual,
            separation: c.separation,
            restarts_used,
            seed,
            converged,
        },
        None => CollisionReport {
            x: Signal::zeros(0),
            y: Signal::zeros(0),
            residual: f64::INFINITY,
            separation: 0.0,
            verdict: Verdict::NoCollisionFound,
            restarts_used: 0,
            seed,
            converged: false,
        },
    }
}

/// Residual rows for a pair plus their derivatives with respect to `x1` and
/// `x2` (each `(R + 1) x N`).
fn pair_residual(
    x1: &DVector<f64>,
    x2: &DVector<f64>,
    a: &DMatrix<f64>,
    blocks: &BlockStructure,
    cfg: &CollisionConfig,
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = x1.len();
    let rr = blocks.count();
    let q = 0.5 * (x1.norm_squared() + x2.norm_squared()) + 1e-300;
    let dp = separable_values(x1, a, blocks) - separable_values(x2, a, blocks);
    let jm1 = separable_jacobian(x1, a, blocks);
    let jm2 = separable_jacobian(x2, a, blocks);

    let mut r = DVector::zeros(rr + 1);
    let mut d1 = DMatrix::zeros(rr + 1, n);
    let mut d2 = DMatrix::zeros(rr + 1, n);
    for k in 0..rr {
        r[k] = dp[k] / q;
        for i in 0..n {
            d1[(k, i)] = jm1[(k, i)] / q - dp[k] * x1[i] / (q * q);
            d2[(k, i)] = -jm2[(k, i)] / q - dp[k] * x2[i] / (q * q);
        }
    }

    let minus = x1 - x2;
    let plus = x1 + x2;
    let (d, sign) = if minus.norm() <= plus.norm() {
        (minus, -1.0)
    } else {
        (plus, 1.0)
    };
    let dn = d.norm();
    let sq = q.sqrt();
    let sep = dn / sq;
    let hinge = 2.0 * cfg.separation_tol - sep;
    if hinge > 0.0 && cfg.penalty > 0.0 {
        let w = cfg.penalty.sqrt();
        r[rr] = w * hinge;
        let unit = if dn > 0.0 { d / dn } else { DVector::zeros(n) };
        for i in 0..n {
            let ds1 = unit[i] / sq - dn * x1[i] / (2.0 * q * sq);
            let ds2 = sign * unit[i] / sq - dn * x2[i] / (2.0 * q * sq);
            d1[(rr, i)] = -w * ds1;
            d2[(rr, i)] = -w * ds2;
        }
    }
    (r, d1, d2)
}

fn free_restart(
    c1: &PriorChart<'_>,
    c2: &PriorChart<'_>,
    z1: DVector<f64>,
    z2: DVector<f64>,
    a: &DMatrix<f64>,
    blocks: &BlockStructure,
    cfg: &CollisionConfig,
) -> Candidate {
    let k1 = z1.len();
    let k2 = z2.len();
    let mut p0 = DVector::zeros(k1 + k2);
    p0.rows_mut(0, k1).copy_from(&z1);
    p0.rows_mut(k1, k2).copy_from(&z2);
    let f = |p: &DVector<f64>| {
        let (x1, j1) = c1.point_and_jacobian(&p.rows(0, k1).into_owned());
        let (x2, j2) = c2.point_and_jacobian(&p.rows(k1, k2).into_owned());
        let (r, d1, d2) = pair_residual(&x1, &x2, a, blocks, cfg);
        let mut jac = DMatrix::zeros(r.len(), k1 + k2);
        jac.columns_mut(0, k1).copy_from(&(d1 * j1));
        jac.columns_mut(k1, k2).copy_from(&(d2 * j2));
        (r, jac)
    };
    let out = levenberg_marquardt(f, p0, &cfg.solver);
    let x = c1.point(&out.params.rows(0, k1).into_owned());
    let y = c2.point(&out.params.rows(k1, k2).into_owned());
    let (residual, separation) = pair_metrics(&x, &y, a, blocks);
    Candidate {
        x,
        y,
        residual,
        separation,
        converged: out.converged,
    }
}

fn anchored_restart(
    x: &DVector<f64>,
    chart: &PriorChart<'_>,
    z0: DVector<f64>,
    a: &DMatrix<f64>,
    blocks: &BlockStructure,
    cfg: &CollisionConfig,
) -> Candidate {
    let f = |z: &DVector<f64>| {
        let (y, jy) = chart.point_and_jacobian(z);
        let (r, _, d2) = pair_residual(x, &y, a, blocks, cfg);
        (r, d2 * jy)
    };
    let out = levenberg_marquardt(f, z0, &cfg.solver);
    let y = chart.point(&out.params);
    let (residual, separation) = pair_metrics(x, &y, a, blocks);
    Candidate {
        x: x.clone(),
        y,
        residual,
        separation,
        converged: out.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::{block_structure_for_power_spectrum, MixingKind};
    use crate::priors::{sample_mixing, Activation, GeneratorNetwork, SparsePrior};

    #[test]
    fn residual_jacobian_matches_finite_differences() {
        let blocks = block_structure_for_power_spectrum(6).unwrap();
        let a = sample_mixing(6, MixingKind::GeneralLinear, 3).unwrap();
        let mut rng = rng::stream(11, 0);
        let x1 = rng::gaussian_vector(&mut rng, 6);
        // close pair so the separation hinge is active
        let x2 = &x1 * -1.0 + rng::gaussian_vector(&mut rng, 6) * 1e-4;
        let cfg = CollisionConfig {
            separation_tol: 0.5,
            ..CollisionConfig::default()
        };
        let (_, d1, d2) = pair_residual(&x1, &x2, a.entries(), &blocks, &cfg);
        let h = 1e-6;
        for i in 0..6 {
            let mut e = DVector::zeros(6);
            e[i] = h;
            let fd1 = (pair_residual(&(&x1 + &e), &x2, a.entries(), &blocks, &cfg).0
                - pair_residual(&(&x1 - &e), &x2, a.entries(), &blocks, &cfg).0)
                / (2.0 * h);
            let fd2 = (pair_residual(&x1, &(&x2 + &e), a.entries(), &blocks, &cfg).0
                - pair_residual(&x1, &(&x2 - &e), a.entries(), &blocks, &cfg).0)
                / (2.0 * h);
            assert!((&fd1 - d1.column(i)).amax() < 1e-6 * (1.0 + fd1.amax()), "x1 col {i}");
            assert!((&fd2 - d2.column(i)).amax() < 1e-6 * (1.0 + fd2.amax()), "x2 col {i}");
        }
    }

    #[test]
    fn torus_rotation_is_a_collision() {
        let blocks = block_structure_for_power_spectrum(6).unwrap();
        let x = Signal::from_slice(&[0.3, -0.2, 1.0, 0.5, -0.7, 0.4]);
        let t: f64 = 0.9;
        let mut y = x.coeffs().clone();
        y[2] = t.cos() * x.coeffs()[2] - t.sin() * x.coeffs()[3];
        y[3] = t.sin() * x.coeffs()[2] + t.cos() * x.coeffs()[3];
        let rep = assess_pair(
            &x,
            &Signal::new(y),
            &MixingMatrix::identity(6),
            &blocks,
            &CollisionConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.verdict, Verdict::Collision);
        assert!(rep.residual < 1e-12 && rep.separation > 0.1);
    }

    #[test]
    fn sign_pair_is_not_a_collision() {
        let blocks = block_structure_for_power_spectrum(5).unwrap();
        let x = Signal::from_slice(&[1.0, 2.0, -1.0, 0.5, 0.1]);
        let rep = assess_pair(
            &x,
            &-&x,
            &MixingMatrix::identity(5),
            &blocks,
            &CollisionConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.verdict, Verdict::NoCollisionFound);
        assert_eq!(rep.separation, 0.0);
    }

    #[test]
    fn full_prior_with_identity_mixing_collides() {
        let blocks = block_structure_for_power_spectrum(6).unwrap();
        let rep = collision_search(&PriorModel::Full(6), &MixingMatrix::identity(6), &blocks, 8, 1).unwrap();
        assert_eq!(rep.verdict, Verdict::Collision);
        assert!(rep.residual < 1e-12, "{}", rep.residual);
    }

    #[test]
    fn standard_sparse_prior_with_identity_mixing_collides() {
        let blocks = block_structure_for_power_spectrum(8).unwrap();
        let prior = PriorModel::Sparse(SparsePrior::standard(8, 2).unwrap());
        let rep = collision_search(&prior, &MixingMatrix::identity(8), &blocks, 64, 4).unwrap();
        assert_eq!(rep.verdict, Verdict::Collision);
        assert!(rep.residual < 1e-12);
    }

    #[test]
    fn search_is_deterministic() {
        let blocks = block_structure_for_power_spectrum(7).unwrap();
        let net = GeneratorNetwork::random(2, &[7], 7, Activation::Relu, 5).unwrap();
        let prior = PriorModel::Generator(net);
        let a = sample_mixing(7, MixingKind::GeneralLinear, 2).unwrap();
        let r1 = collision_search(&prior, &a, &blocks, 12, 9).unwrap();
        let r2 = collision_search(&prior, &a, &blocks, 12, 9).unwrap();
        assert_eq!(r1.residual.to_bits(), r2.residual.to_bits());
        assert_eq!(r1.x, r2.x);
        assert_eq!(r1.restarts_used, 12);
    }

    #[test]
    fn dimension_mismatch() {
        let blocks = block_structure_for_power_spectrum(5).unwrap();
        assert!(collision_search(&PriorModel::Full(6), &MixingMatrix::identity(6), &blocks, 1, 0).is_err());
    }
}
