//! Second-moment estimation, exact orbit averages and invariant extraction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::group::{GroupAction, GroupElement};
use super::observe::{check_simulation, chunk_count, chunk_len, simulate_chunk, MRAObservationSet, OBSERVATION_CHUNK};
use super::quadrature::so3_quadrature;
use crate::error::{Error, Result};
use crate::measurements::{BlockStructure, MeasurementVector, Signal};

#[derive(Clone, Debug)]
pub struct SecondMomentEstimate {
    /// Symmetric `N x N` estimate of the orbit second moment.
    pub matrix: DMatrix<f64>,
    pub n_used: usize,
    pub sigma_assumed: f64,
}

/// Running sums of `y y^T`. Rows arrive in chunks; each chunk is summed on
/// its own and chunk sums are added in order, which fixes the rounding
/// regardless of how the chunks were produced.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    dim: usize,
    sum: Vec<f64>,
    count: usize,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sum: vec![0.0; dim * dim],
            count: 0,
        }
    }

    /// Add one chunk of rows given row-major.
    pub fn push_chunk(&mut self, rows: &[f64]) {
        let partial = chunk_outer_sum(rows, self.dim);
        self.add_partial(&partial, rows.len() / self.dim);
    }

    fn add_partial(&mut self, partial: &[f64], rows: usize) {
        for (s, p) in self.sum.iter_mut().zip(partial) {
            *s += p;
        }
        self.count += rows;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(1/n) sum y y^T - sigma^2 I`, symmetrised.
    pub fn finish(&self, sigma: f64) -> SecondMomentEstimate {
        let d = self.dim;
        let n = self.count as f64;
        let raw = DMatrix::from_fn(d, d, |i, j| self.sum[i * d + j] / n);
        let mut m = (&raw + raw.transpose()) * 0.5;
        for i in 0..d {
            m[(i, i)] -= sigma * sigma;
        }
        SecondMomentEstimate {
            matrix: m,
            n_used: self.count,
            sigma_assumed: sigma,
        }
    }
}

fn chunk_outer_sum(rows: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d * d];
    for y in rows.chunks_exact(d) {
        for i in 0..d {
            let yi = y[i];
            let si = &mut s[i * d..(i + 1) * d];
            for j in 0..d {
                si[j] += yi * y[j];
            }
        }
    }
    s
}

/// Running sums of `y_i^2` only, enough for the invariants. Uses the same
/// summation order as the diagonal of [`MomentAccumulator`], so the
/// invariants agree bit for bit with [`extract_invariants`] of the full
/// estimate.
#[derive(Clone, Debug)]
pub struct InvariantAccumulator {
    blocks: BlockStructure,
    sum: Vec<f64>,
    count: usize,
}

impl InvariantAccumulator {
    pub fn new(blocks: BlockStructure) -> Self {
        let d = blocks.dim();
        Self {
            blocks,
            sum: vec![0.0; d],
            count: 0,
        }
    }

    pub fn push_chunk(&mut self, rows: &[f64]) {
        let partial = chunk_square_sum(rows, self.blocks.dim());
        self.add_partial(&partial, rows.len() / self.blocks.dim());
    }

    fn add_partial(&mut self, partial: &[f64], rows: usize) {
        for (s, p) in self.sum.iter_mut().zip(partial) {
            *s += p;
        }
        self.count += rows;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn invariants(&self, sigma: f64) -> MeasurementVector {
        let n = self.count as f64;
        let diag: Vec<f64> = self.sum.iter().map(|s| s / n - sigma * sigma).collect();
        trace_blocks(|i| diag[i], &self.blocks)
    }
}

fn chunk_square_sum(rows: &[f64], d: usize) -> Vec<f64> {
    let mut s = vec![0.0; d];
    for y in rows.chunks_exact(d) {
        for i in 0..d {
            s[i] += y[i] * y[i];
        }
    }
    s
}

fn trace_blocks(diag: impl Fn(usize) -> f64, blocks: &BlockStructure) -> MeasurementVector {
    MeasurementVector::estimated(DVector::from_iterator(
        blocks.count(),
        blocks.ranges().map(|r| r.fold(0.0, |acc, i| acc + diag(i))),
    ))
}

/// `(1/n) sum_i y_i y_i^T - sigma^2 I`, symmetrised; unbiased for the orbit
/// second moment when `sigma` is the true noise level.
pub fn estimate_second_moment(obs: &MRAObservationSet) -> SecondMomentEstimate {
    let d = obs.dim();
    let n = obs.n();
    let mut acc = MomentAccumulator::new(d);
    let mut buf = vec![0.0; OBSERVATION_CHUNK * d];
    for c in 0..chunk_count(n) {
        let len = chunk_len(n, c);
        for r in 0..len {
            for j in 0..d {
                buf[r * d + j] = obs.observations[(c * OBSERVATION_CHUNK + r, j)];
            }
        }
        acc.push_chunk(&buf[..len * d]);
    }
    acc.finish(obs.sigma)
}

/// Same value as `estimate_second_moment(simulate_observations(..))` without
/// storing the observations; chunks are generated in parallel.
pub fn stream_second_moment(
    x: &Signal,
    group: &GroupAction,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<SecondMomentEstimate> {
    check_simulation(x, group, n, sigma)?;
    let d = group.dim();
    let partials = chunk_partials(x, group, n, sigma, seed, |rows| chunk_outer_sum(rows, d))?;
    let mut acc = MomentAccumulator::new(d);
    for (len, p) in partials {
        acc.add_partial(&p, len);
    }
    Ok(acc.finish(sigma))
}

/// Same value as `extract_invariants(estimate_second_moment(simulate_observations(..)))`
/// at a fraction of the cost.
pub fn stream_invariants(
    x: &Signal,
    group: &GroupAction,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<MeasurementVector> {
    check_simulation(x, group, n, sigma)?;
    let d = group.dim();
    let partials = chunk_partials(x, group, n, sigma, seed, |rows| chunk_square_sum(rows, d))?;
    let mut acc = InvariantAccumulator::new(group.blocks());
    for (len, p) in partials {
        acc.add_partial(&p, len);
    }
    Ok(acc.invariants(sigma))
}

fn chunk_partials<F>(
    x: &Signal,
    group: &GroupAction,
    n: usize,
    sigma: f64,
    seed: u64,
    reduce: F,
) -> Result<Vec<(usize, Vec<f64>)>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let d = group.dim();
    (0..chunk_count(n))
        .into_par_iter()
        .map(|c| {
            let len = chunk_len(n, c);
            let mut buf = vec![0.0; len * d];
            simulate_chunk(x, group, sigma, seed, c, len, &mut buf)?;
            Ok((len, reduce(&buf)))
        })
        .collect()
}

/// Population second moment `E_g[(g.x)(g.x)^T]`: exact enumeration for the
/// finite groups, product quadrature (exact for band-limited integrands) for SO(3).
pub fn exact_orbit_moment(x: &Signal, group: &GroupAction) -> Result<DMatrix<f64>> {
    if x.len() != group.dim() {
        return Err(Error::mismatch("signal vs group", group.dim(), x.len()));
    }
    let d = group.dim();
    let weighted: Vec<(GroupElement, f64)> = match group.elements() {
        Some(all) => {
            let w = 1.0 / all.len() as f64;
            all.into_iter().map(|g| (g, w)).collect()
        }
        None => {
            let l = group.band_limit().expect("infinite groups are SO(3)");
            so3_quadrature(l)
                .into_iter()
                .map(|(alpha, beta, gamma, w)| (GroupElement::Rotation { alpha, beta, gamma }, w))
                .collect()
        }
    };
    let mut m = DMatrix::zeros(d, d);
    let mut y = vec![0.0; d];
    for (g, w) in weighted {
        group.operator(&g)?.apply(x.as_slice(), &mut y);
        let yv = DVector::from_column_slice(&y);
        m += w * &yv * yv.transpose();
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// Entry `l` is the trace of diagonal block `l`, an estimate of `|x[l]|^2`.
/// Estimated invariants may be negative at high noise.
pub fn extract_invariants(est: &SecondMomentEstimate, blocks: &BlockStructure) -> Result<MeasurementVector> {
    let d = est.matrix.nrows();
    if est.matrix.ncols() != d || blocks.dim() != d {
        return Err(Error::mismatch("moment vs block structure", blocks.dim(), d));
    }
    Ok(trace_blocks(|i| est.matrix[(i, i)], blocks))
}

/// Largest entry outside the diagonal blocks.
pub fn off_block_max(m: &DMatrix<f64>, blocks: &BlockStructure) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if blocks.block_of(i) != blocks.block_of(j) {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

/// `max_l max |M_l - (tr M_l / N_l) I|` over the diagonal blocks.
pub fn block_scalar_defect(m: &DMatrix<f64>, blocks: &BlockStructure) -> f64 {
    let mut worst = 0.0_f64;
    for r in blocks.ranges() {
        let k = r.len();
        let sub = m.view((r.start, r.start), (k, k));
        let lambda = sub.trace() / k as f64;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { lambda } else { 0.0 };
                worst = worst.max((sub[(i, j)] - target).abs());
            }
        }
    }
    worst
}

/// `|M_hat_l - M_l|_F / |M_l|_F` for each diagonal block.
pub fn block_relative_errors(estimate: &DMatrix<f64>, exact: &DMatrix<f64>, blocks: &BlockStructure) -> Vec<f64> {
    blocks
        .ranges()
        .map(|r| {
            let k = r.len();
            let e = exact.view((r.start, r.start), (k, k));
            let a = estimate.view((r.start, r.start), (k, k));
            (a - e).norm() / e.norm()
        })
        .collect()
}
