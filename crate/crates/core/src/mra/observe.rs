//! Noisy randomly transformed copies `y_i = g_i . x + sigma * eps_i`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::group::{GroupAction, GroupKind};
use crate::error::{Error, Result};
use crate::measurements::Signal;
use crate::rng;

/// Observations are drawn in chunks of this many rows; chunk `c` uses
/// random stream `c` of the seed, so any prefix of a longer simulation
/// equals the shorter simulation.
pub const OBSERVATION_CHUNK: usize = 4096;

const MAGIC: &[u8; 4] = b"MRA1";

#[derive(Clone, Debug)]
pub struct MRAObservationSet {
    /// `n x N`, one observation per row.
    pub observations: DMatrix<f64>,
    pub sigma: f64,
    pub group: GroupAction,
    pub seed: u64,
    /// Ground truth, kept for evaluation only.
    pub true_signal: Option<Signal>,
}

impl MRAObservationSet {
    pub fn new(observations: DMatrix<f64>, sigma: f64, group: GroupAction, seed: u64) -> Result<Self> {
        if observations.nrows() == 0 {
            return Err(Error::InvalidParameter("an observation set needs n >= 1".into()));
        }
        if observations.ncols() != group.dim() {
            return Err(Error::mismatch("observation width", group.dim(), observations.ncols()));
        }
        check_sigma(sigma)?;
        Ok(Self {
            observations,
            sigma,
            group,
            seed,
            true_signal: None,
        })
    }

    pub fn with_true_signal(mut self, x: Signal) -> Self {
        self.true_signal = Some(x);
        self
    }

    pub fn n(&self) -> usize {
        self.observations.nrows()
    }

    pub fn dim(&self) -> usize {
        self.observations.ncols()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    Ok(())
}

pub(crate) fn check_simulation(x: &Signal, group: &GroupAction, n: usize, sigma: f64) -> Result<()> {
    if x.len() != group.dim() {
        return Err(Error::mismatch("signal vs group", group.dim(), x.len()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    check_sigma(sigma)
}

/// Number of chunks covering `n` observations and the length of chunk `c`.
pub(crate) fn chunk_count(n: usize) -> usize {
    n.div_ceil(OBSERVATION_CHUNK)
}

pub(crate) fn chunk_len(n: usize, c: usize) -> usize {
    OBSERVATION_CHUNK.min(n - c * OBSERVATION_CHUNK)
}

/// Rows of chunk `c`, written row-major into `out` (`len * N` entries).
///
/// Every observation draws its group element and then `N` standard normals,
/// also when `sigma = 0`, so different noise levels share random numbers.
pub(crate) fn simulate_chunk(
    x: &Signal,
    group: &GroupAction,
    sigma: f64,
    seed: u64,
    c: usize,
    len: usize,
    out: &mut [f64],
) -> Result<()> {
    let n = group.dim();
    let mut r = rng::stream(seed, c as u64);
    let src = x.as_slice();
    for row in out[..len * n].chunks_exact_mut(n) {
        let g = group.sample(&mut r);
        group.operator(&g)?.apply(src, row);
        for v in row.iter_mut() {
            let e: f64 = r.sample(StandardNormal);
            *v += sigma * e;
        }
    }
    Ok(())
}

/// Simulate `n` observations of `x` under uniformly random group elements
/// with i.i.d. `N(0, sigma^2 I)` noise.
pub fn simulate_observations(
    x: &Signal,
    group: &GroupAction,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<MRAObservationSet> {
    check_simulation(x, group, n, sigma)?;
    let dim = group.dim();
    let mut data = vec![0.0; n * dim];
    for c in 0..chunk_count(n) {
        let len = chunk_len(n, c);
        let start = c * OBSERVATION_CHUNK * dim;
        simulate_chunk(x, group, sigma, seed, c, len, &mut data[start..start + len * dim])?;
    }
    let observations = DMatrix::from_row_slice(n, dim, &data);
    Ok(MRAObservationSet::new(observations, sigma, group.clone(), seed)?.with_true_signal(x.clone()))
}

/// Write the binary observation format: `"MRA1"`, `N` (u64), `n` (u64),
/// `sigma` (f64), group tag (u8), seed (u64), then `n * N` f64 row-major;
/// all little-endian.
pub fn write_observations<W: Write>(obs: &MRAObservationSet, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(obs.dim() as u64).to_le_bytes())?;
    w.write_all(&(obs.n() as u64).to_le_bytes())?;
    w.write_all(&obs.sigma.to_le_bytes())?;
    w.write_all(&[obs.group.kind().tag()])?;
    w.write_all(&obs.seed.to_le_bytes())?;
    for i in 0..obs.n() {
        for j in 0..obs.dim() {
            w.write_all(&obs.observations[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations<R: Read>(mut r: R) -> Result<MRAObservationSet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not an MRA1 observation file".into()));
    }
    let mut b8 = [0u8; 8];
    let mut read_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let dim = read_u64(&mut r)? as usize;
    let n = read_u64(&mut r)? as usize;
    let sigma = f64::from_bits(read_u64(&mut r)?);
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let seed = read_u64(&mut r)?;
    let kind = GroupKind::from_tag(tag[0])?;
    let group = GroupAction::new(kind, dim)?;
    let total = n
        .checked_mul(dim)
        .ok_or_else(|| Error::Format("observation count overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != total * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes of observations, found {}",
            total * 8,
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    MRAObservationSet::new(DMatrix::from_row_slice(n, dim, &data), sigma, group, seed)
}

pub fn save_observations(obs: &MRAObservationSet, path: &Path) -> Result<()> {
    write_observations(obs, BufWriter::new(File::create(path)?))
}

pub fn load_observations(path: &Path) -> Result<MRAObservationSet> {
    read_observations(BufReader::new(File::open(path)?))
}
