//! Dispatch of a parsed configuration to the library.
//!
//! Each command is split into `prepare`, which builds every object named by
//! the configuration and reports problems as [`ConfigError`]s, and `execute`,
//! which runs the numerics. Non-convergence is recorded in flags.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde_json::{json, Value};

use phaseprior::injectivity::{
    assess_pair, brute_force_oracle_with, codimension_probe_with, collision_search_anchored, collision_search_with,
    threshold_sweep, write_sweep_csv, CollisionReport, SweepConfig,
};
use phaseprior::measurements::{cyclic_shift, second_moment_blocks, separable_measurement, to_real_fourier};
use phaseprior::mra::{
    block_relative_errors, block_scalar_defect, estimate_second_moment, exact_orbit_moment, extract_invariants,
    off_block_max, recover, sample_complexity_sweep, simulate_observations, stream_second_moment, write_observations,
    write_sample_complexity_csv, GroupAction, RecoveryConfig, SampleComplexityConfig,
};
use phaseprior::priors::{estimate_image_dimension_with_tol, sample_prior, PriorModel};
use phaseprior::{rng, BlockStructure, MixingMatrix, Signal};

use crate::config::{
    CollideParams, ConfigError, ExperimentConfig, MeasureParams, MraSimParams, Params, ProbeDimParams, SweepParams,
};
use crate::specs::signal_from_values;

/// Stream index of the anchor signal in anchored collision searches.
const ANCHOR_STREAM: u64 = 1 << 40;
/// Stream indices of the control pairs and of probe pairs.
const CONTROL_STREAM: u64 = 1 << 41;
const PAIR_STREAM: u64 = 1 << 32;

/// Everything a run produces besides provenance.
#[derive(Debug)]
pub struct Outcome {
    pub csv: String,
    pub results: Value,
    pub flags: Vec<String>,
    /// Additional artifacts `(file name, bytes)`.
    pub files: Vec<(String, Vec<u8>)>,
}

pub enum Plan {
    Measure {
        x: Signal,
        a: MixingMatrix,
        blocks: BlockStructure,
    },
    Collide {
        params: CollideParams,
        prior: PriorModel,
        mixings: Vec<(u64, MixingMatrix)>,
        blocks: BlockStructure,
    },
    ProbeDim {
        params: ProbeDimParams,
        blocks: BlockStructure,
    },
    MraSim {
        params: MraSimParams,
        group: GroupAction,
        x: Signal,
        recovery: Option<(PriorModel, MixingMatrix, RecoveryConfig, u64)>,
    },
    Threshold(SweepConfig),
    SampleComplexity {
        prior: PriorModel,
        a: MixingMatrix,
        group: GroupAction,
        sigmas: Vec<f64>,
        config: SampleComplexityConfig,
    },
}

fn lib_err(field: &str) -> impl Fn(phaseprior::Error) -> ConfigError + '_ {
    move |e| ConfigError::at_field(field, e.to_string())
}

fn blocks_for(
    n: Option<usize>,
    blocks: &Option<Vec<usize>>,
    fallback_n: Option<usize>,
) -> Result<BlockStructure, ConfigError> {
    let p = "parameters";
    match blocks {
        Some(dims) => {
            let b = BlockStructure::new(dims.clone()).map_err(lib_err("parameters.blocks"))?;
            if let Some(n) = n {
                if n != b.dim() {
                    return Err(ConfigError::at_field(
                        "parameters.N",
                        format!("N = {n} but the blocks cover {} coordinates", b.dim()),
                    ));
                }
            }
            Ok(b)
        }
        None => {
            let n = n
                .or(fallback_n)
                .ok_or_else(|| ConfigError::at_field(format!("{p}.N"), "either N or blocks is required"))?;
            BlockStructure::power_spectrum(n).map_err(lib_err("parameters.N"))
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Plan, ConfigError> {
    let base = cfg.base_dir.as_path();
    match &cfg.params {
        Params::Measure(p) => prepare_measure(p),
        Params::Collide(p) => prepare_collide(p, base),
        Params::ProbeDim(p) => {
            let blocks = blocks_for(p.n, &p.blocks, None)?;
            if p.pairs == 0 {
                return Err(ConfigError::at_field("parameters.pairs", "must be at least 1"));
            }
            Ok(Plan::ProbeDim {
                params: p.clone(),
                blocks,
            })
        }
        Params::MraSim(p) => prepare_mra(p, base),
        Params::Sweep(p) => prepare_sweep(p, base),
    }
}

fn prepare_measure(p: &MeasureParams) -> Result<Plan, ConfigError> {
    let blocks = blocks_for(p.n, &p.blocks, Some(p.x.len()))?;
    let power_spectrum = p.blocks.is_none();
    let x = signal_from_values(&p.x, p.domain, power_spectrum, "parameters.x")?;
    if x.len() != blocks.dim() {
        return Err(ConfigError::at_field(
            "parameters.x",
            format!("expected {} values, found {}", blocks.dim(), x.len()),
        ));
    }
    let a = p.mixing.build(blocks.dim(), "parameters.mixing")?;
    Ok(Plan::Measure { x, a, blocks })
}

fn prepare_collide(p: &CollideParams, base: &Path) -> Result<Plan, ConfigError> {
    let prior = p.prior.build(base, "parameters.prior")?;
    let n = prior.output_dim();
    let blocks = blocks_for(Some(n), &p.blocks, None)?;
    let seeds = p.mixing_seeds.clone().unwrap_or_else(|| vec![p.mixing.seed]);
    if seeds.is_empty() {
        return Err(ConfigError::at_field("parameters.mixing_seeds", "must not be empty"));
    }
    let mixings = seeds
        .iter()
        .map(|&s| Ok((s, p.mixing.with_seed(s).build(n, "parameters.mixing")?)))
        .collect::<Result<Vec<_>, ConfigError>>()?;
    if p.search.restarts == 0 {
        return Err(ConfigError::at_field(
            "parameters.search.restarts",
            "must be at least 1",
        ));
    }
    if p.controls && n < 3 {
        return Err(ConfigError::at_field("parameters.controls", "controls need N >= 3"));
    }
    Ok(Plan::Collide {
        params: p.clone(),
        prior,
        mixings,
        blocks,
    })
}

fn prepare_mra(p: &MraSimParams, base: &Path) -> Result<Plan, ConfigError> {
    let group = p.group.build("parameters.group")?;
    let x = p.signal.build(&group, base, "parameters.signal")?;
    if p.n == 0 {
        return Err(ConfigError::at_field("parameters.n", "must be at least 1"));
    }
    if !(p.sigma.is_finite() && p.sigma >= 0.0) {
        return Err(ConfigError::at_field("parameters.sigma", "must be finite and >= 0"));
    }
    let recovery = match &p.recover {
        None => None,
        Some(r) => {
            let prior = r.prior.build(base, "parameters.recover.prior")?;
            if prior.output_dim() != group.dim() {
                return Err(ConfigError::at_field(
                    "parameters.recover.prior",
                    format!(
                        "prior output dimension {} differs from the group dimension {}",
                        prior.output_dim(),
                        group.dim()
                    ),
                ));
            }
            let a = r.mixing.build(group.dim(), "parameters.recover.mixing")?;
            Some((prior, a, r.config.clone(), r.seed))
        }
    };
    Ok(Plan::MraSim {
        params: p.clone(),
        group,
        x,
        recovery,
    })
}

fn prepare_sweep(p: &SweepParams, base: &Path) -> Result<Plan, ConfigError> {
    match (&p.threshold, &p.sample_complexity) {
        (Some(t), None) => Ok(Plan::Threshold(t.clone())),
        (None, Some(s)) => {
            let prior = s.prior.build(base, "parameters.sample_complexity.prior")?;
            let group = s.group.build("parameters.sample_complexity.group")?;
            if prior.output_dim() != group.dim() {
                return Err(ConfigError::at_field(
                    "parameters.sample_complexity.prior",
                    format!(
                        "prior output dimension {} differs from the group dimension {}",
                        prior.output_dim(),
                        group.dim()
                    ),
                ));
            }
            let a = s.mixing.build(group.dim(), "parameters.sample_complexity.mixing")?;
            Ok(Plan::SampleComplexity {
                prior,
                a,
                group,
                sigmas: s.sigmas.clone(),
                config: s.config(),
            })
        }
        _ => Err(ConfigError::at_field(
            "parameters",
            "exactly one of `threshold` and `sample_complexity` is required",
        )),
    }
}

pub fn execute(plan: Plan) -> phaseprior::Result<Outcome> {
    match plan {
        Plan::Measure { x, a, blocks } => run_measure(&x, &a, &blocks),
        Plan::Collide {
            params,
            prior,
            mixings,
            blocks,
        } => run_collide(&params, &prior, &mixings, &blocks),
        Plan::ProbeDim { params, blocks } => run_probe(&params, &blocks),
        Plan::MraSim {
            params,
            group,
            x,
            recovery,
        } => run_mra(&params, &group, &x, recovery),
        Plan::Threshold(cfg) => run_threshold(&cfg),
        Plan::SampleComplexity {
            prior,
            a,
            group,
            sigmas,
            config,
        } => run_sample_complexity(&prior, &a, &group, &sigmas, &config),
    }
}

fn outcome(csv: String, results: Value, flags: Vec<String>) -> Outcome {
    Outcome {
        csv,
        results,
        flags,
        files: Vec::new(),
    }
}

fn run_measure(x: &Signal, a: &MixingMatrix, blocks: &BlockStructure) -> phaseprior::Result<Outcome> {
    let p = separable_measurement(x, a, blocks)?;
    let header: Vec<String> = (1..=p.len()).map(|k| format!("m{k}")).collect();
    let row: Vec<String> = p.as_slice().iter().map(|v| v.to_string()).collect();
    let csv = format!("{}\n{}\n", header.join(","), row.join(","));
    let results = json!({"measurement": p.as_slice(), "blocks": blocks.dims()});
    Ok(outcome(csv, results, Vec::new()))
}

const COLLIDE_HEADER: &str = "case,N,M_hat,kind,mixing_seed,verdict,residual,separation,restarts_used,converged";

fn collide_row(csv: &mut String, case: &str, n: usize, m_hat: usize, kind: &str, seed: u64, r: &CollisionReport) {
    let _ = writeln!(
        csv,
        "{case},{n},{m_hat},{kind},{seed},{},{:e},{:e},{},{}",
        r.verdict, r.residual, r.separation, r.restarts_used, r.converged
    );
}

fn prior_dimension(prior: &PriorModel, p: &CollideParams) -> usize {
    match prior {
        PriorModel::Generator(net) => {
            estimate_image_dimension_with_tol(net, p.dimension_trials, p.seed, p.rank_tol).value
        }
        PriorModel::Sparse(s) => s.sparsity(),
        PriorModel::Full(n) => *n,
    }
}

/// Identity-mixing pairs that collide by construction: a rotation of every
/// frequency pair, and a two-point support against its cyclic shift.
fn control_pairs(n: usize, seed: u64) -> phaseprior::Result<[(&'static str, Signal, Signal); 2]> {
    let blocks = BlockStructure::power_spectrum(n)?;
    let mut r = rng::stream(seed, CONTROL_STREAM);
    let x = rng::gaussian_vector(&mut r, n);
    let mut y = x.clone();
    for (k, range) in blocks.ranges().enumerate() {
        if range.len() == 2 {
            let t = 0.7 + 0.3 * k as f64;
            let (c, s) = (t.cos(), t.sin());
            let (u, v) = (x[range.start], x[range.start + 1]);
            y[range.start] = c * u - s * v;
            y[range.start + 1] = s * u + c * v;
        }
    }
    let coef = rng::gaussian_vector(&mut r, 2);
    let mut v = DVector::zeros(n);
    v[0] = coef[0];
    v[1] = coef[1];
    let sx = to_real_fourier(&v)?;
    let sy = to_real_fourier(&cyclic_shift(&v, 1))?;
    Ok([
        ("control-torus", Signal::new(x), Signal::new(y)),
        ("control-sparse-shift", sx, sy),
    ])
}

fn report_json(r: &CollisionReport) -> Value {
    json!({
        "verdict": r.verdict,
        "residual": r.residual,
        "separation": r.separation,
        "restarts_used": r.restarts_used,
        "converged": r.converged,
        "x": r.x,
        "y": r.y,
    })
}

fn run_collide(
    p: &CollideParams,
    prior: &PriorModel,
    mixings: &[(u64, MixingMatrix)],
    blocks: &BlockStructure,
) -> phaseprior::Result<Outcome> {
    let n = prior.output_dim();
    let m_hat = prior_dimension(prior, p);
    let kind = p.mixing.label();
    let mut csv = format!("{COLLIDE_HEADER}\n");
    let mut flags = Vec::new();
    let mut searches = Vec::new();
    let mut oracles = Vec::new();
    for (s, a) in mixings {
        let report = if p.anchored {
            let x = Signal::new(sample_prior(prior, &mut rng::stream(p.seed, ANCHOR_STREAM))?);
            collision_search_anchored(&x, prior, a, blocks, &p.search, p.seed)?
        } else {
            collision_search_with(prior, a, blocks, &p.search, p.seed)?
        };
        collide_row(&mut csv, "search", n, m_hat, kind, *s, &report);
        if !report.converged {
            flags.push(format!("search did not converge for mixing_seed={s}"));
        }
        searches.push(json!({"mixing_seed": s, "report": report_json(&report)}));
        if let Some(o) = &p.oracle {
            let out = brute_force_oracle_with(prior, a, blocks, o.grid_points, &o.config)?;
            collide_row(&mut csv, "oracle", n, m_hat, kind, *s, &out.report);
            if out.report.verdict != report.verdict {
                flags.push(format!("oracle and search disagree for mixing_seed={s}"));
            }
            oracles.push(
                json!({"mixing_seed": s, "score": out.score, "points": out.points, "report": report_json(&out.report)}),
            );
        }
    }
    let mut controls = Vec::new();
    if p.controls {
        let id = MixingMatrix::identity(n);
        let ps = BlockStructure::power_spectrum(n)?;
        for (case, x, y) in control_pairs(n, p.seed)? {
            let report = assess_pair(&x, &y, &id, &ps, &p.search)?;
            collide_row(&mut csv, case, n, n, "identity", 0, &report);
            controls.push(json!({"case": case, "report": report_json(&report)}));
        }
    }
    let results = json!({
        "N": n,
        "M_hat": m_hat,
        "searches": searches,
        "oracle": oracles,
        "controls": controls,
    });
    Ok(outcome(csv, results, flags))
}

const PROBE_HEADER: &str =
    "pair,N,manifold,ambient_dim,estimated_solution_dim,theoretical_bound,converged,residual,singleton_defect";

fn probe_pair(seed: u64, pair: usize, n: usize, equal_norms: bool) -> (Signal, Signal) {
    let mut r = rng::stream(seed, PAIR_STREAM + pair as u64);
    let x = rng::gaussian_vector(&mut r, n);
    let mut y = rng::gaussian_vector(&mut r, n);
    if equal_norms {
        y *= x.norm() / y.norm();
    }
    (Signal::new(x), Signal::new(y))
}

/// `max_k min(|<x+y, w_k>|, |<x-y, w_k>|)` over singleton blocks `k`; zero
/// whenever the singleton constraints hold.
fn singleton_defect(x: &Signal, y: &Signal, a: &nalgebra::DMatrix<f64>, blocks: &BlockStructure) -> f64 {
    let (s, d) = (x.coeffs() + y.coeffs(), x.coeffs() - y.coeffs());
    blocks
        .ranges()
        .filter(|r| r.len() == 1)
        .map(|r| {
            let w = a.row(r.start).transpose();
            w.dot(&s).abs().min(w.dot(&d).abs())
        })
        .fold(0.0, f64::max)
}

fn run_probe(p: &ProbeDimParams, blocks: &BlockStructure) -> phaseprior::Result<Outcome> {
    let n = blocks.dim();
    let estimates = (0..p.pairs)
        .into_par_iter()
        .map(|i| {
            let (x, y) = probe_pair(p.seed, i, n, p.equal_norms);
            let est = codimension_probe_with(&x, &y, p.manifold, blocks, p.seed.wrapping_add(i as u64), &p.codim)?;
            let defect = if est.converged {
                singleton_defect(&x, &y, &est.solution, blocks)
            } else {
                f64::NAN
            };
            Ok((est, defect))
        })
        .collect::<phaseprior::Result<Vec<_>>>()?;
    let mut csv = format!("{PROBE_HEADER}\n");
    let mut flags = Vec::new();
    let mut rows = Vec::new();
    for (i, (e, defect)) in estimates.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{n},{},{},{},{},{},{:e},{:e}",
            p.manifold, e.ambient_dim, e.estimated_solution_dim, e.theoretical_bound, e.converged, e.residual, defect
        );
        if !e.converged {
            flags.push(format!("probe did not converge for pair {i}"));
        } else if e.estimated_solution_dim > e.theoretical_bound {
            flags.push(format!("pair {i} exceeds the dimension bound"));
        }
        rows.push(json!({"pair": i, "estimate": e, "singleton_defect": defect}));
    }
    let converged: Vec<_> = estimates.iter().filter(|(e, _)| e.converged).collect();
    let at_bound = converged
        .iter()
        .filter(|(e, _)| e.estimated_solution_dim == e.theoretical_bound)
        .count();
    let results = json!({
        "N": n,
        "blocks": blocks.dims(),
        "manifold": p.manifold,
        "converged": converged.len(),
        "at_bound": at_bound,
        "pairs": rows,
    });
    Ok(outcome(csv, results, flags))
}

const MRA_HEADER: &str = "block,dim,true_invariant,estimated_invariant,exact_invariant,mc_block_rel_error";

fn run_mra(
    p: &MraSimParams,
    group: &GroupAction,
    x: &Signal,
    recovery: Option<(PriorModel, MixingMatrix, RecoveryConfig, u64)>,
) -> phaseprior::Result<Outcome> {
    let blocks = group.blocks();
    let mut files = Vec::new();
    let est = if p.save_observations {
        let obs = simulate_observations(x, group, p.n, p.sigma, p.seed)?;
        let mut bytes = Vec::new();
        write_observations(&obs, &mut bytes)?;
        files.push(("observations.bin".to_string(), bytes));
        estimate_second_moment(&obs)
    } else {
        stream_second_moment(x, group, p.n, p.sigma, p.seed)?
    };
    let exact = exact_orbit_moment(x, group)?;
    let truth = second_moment_blocks(x, &blocks)?;
    let estimated = extract_invariants(&est, &blocks)?;
    let exact_inv: Vec<f64> = blocks.ranges().map(|r| r.map(|i| exact[(i, i)]).sum()).collect();
    let rel = block_relative_errors(&est.matrix, &exact, &blocks);

    let mut csv = format!("{MRA_HEADER}\n");
    for (k, d) in blocks.dims().iter().enumerate() {
        let _ = writeln!(
            csv,
            "{k},{d},{:e},{:e},{:e},{:e}",
            truth.as_slice()[k],
            estimated.as_slice()[k],
            exact_inv[k],
            rel[k]
        );
    }
    let mut flags = Vec::new();
    let recovery_json = match recovery {
        None => Value::Null,
        Some((prior, a, cfg, seed)) => {
            let rec = recover(&estimated, &prior, &a, &blocks, &cfg, seed)?;
            if !rec.converged {
                flags.push("recovery did not converge".to_string());
            }
            json!({
                "error": rec.error(x),
                "residual": rec.residual,
                "converged": rec.converged,
                "x_hat": rec.x_hat,
                "latent": rec.latent,
            })
        }
    };
    let results = json!({
        "group": group,
        "true_signal": x,
        "n": p.n,
        "sigma": p.sigma,
        "exact_offblock_max": off_block_max(&exact, &blocks),
        "exact_block_scalar_defect": block_scalar_defect(&exact, &blocks),
        "estimate_offblock_max": off_block_max(&est.matrix, &blocks),
        "mc_block_rel_error": rel,
        "recovery": recovery_json,
    });
    Ok(Outcome {
        csv,
        results,
        flags,
        files,
    })
}

fn run_threshold(cfg: &SweepConfig) -> phaseprior::Result<Outcome> {
    let table = threshold_sweep(cfg)?;
    let mut bytes = Vec::new();
    write_sweep_csv(&table.rows, &mut bytes)?;
    let flags = table
        .rows
        .iter()
        .filter(|r| !r.converged)
        .map(|r| format!("search did not converge for N={} M={} seed={}", r.n, r.m, r.seed))
        .collect();
    let results = json!({"rows": table.rows, "cells": table.cells});
    Ok(outcome(String::from_utf8(bytes).expect("ascii csv"), results, flags))
}

fn run_sample_complexity(
    prior: &PriorModel,
    a: &MixingMatrix,
    group: &GroupAction,
    sigmas: &[f64],
    cfg: &SampleComplexityConfig,
) -> phaseprior::Result<Outcome> {
    let table = sample_complexity_sweep(prior, a, group, sigmas, cfg)?;
    let mut bytes = Vec::new();
    write_sample_complexity_csv(&table, &mut bytes)?;
    let flags = table
        .cells
        .iter()
        .filter(|c| c.saturated)
        .map(|c| format!("n_cap reached without meeting the target at sigma={}", c.sigma))
        .collect();
    let results = serde_json::to_value(&table)?;
    Ok(outcome(String::from_utf8(bytes).expect("ascii csv"), results, flags))
}
