//! Power spectrum, block second moments and the separable measurement `P(x; A)`.
//!
//! Signals are stored in block coordinates. For phase retrieval these are the
//! coefficients in the unitary real Fourier basis ordered as
//! `[DC, Nyquist (even N only), cos_1, sin_1, cos_2, sin_2, ...]`, so that the
//! singleton blocks come first and the block energies are the power spectrum
//! grouped by conjugate frequency pair.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Coefficient vector of a signal in block coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Signal {
    coeffs: DVector<f64>,
}

impl Signal {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DVector::zeros(n))
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coeffs.as_slice()
    }
}

impl From<DVector<f64>> for Signal {
    fn from(coeffs: DVector<f64>) -> Self {
        Self::new(coeffs)
    }
}

impl From<Vec<f64>> for Signal {
    fn from(values: Vec<f64>) -> Self {
        Self::new(DVector::from_vec(values))
    }
}

impl From<Signal> for Vec<f64> {
    fn from(x: Signal) -> Self {
        x.coeffs.as_slice().to_vec()
    }
}

impl std::ops::Neg for &Signal {
    type Output = Signal;

    fn neg(self) -> Signal {
        Signal::new(-&self.coeffs)
    }
}

/// Ordered dimensions `(N_1, ..., N_R)` of the irreducible blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockStructure {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockStructure {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDimension("block structure has no blocks".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidDimension(format!("block {pos} has size 0")));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Ok(Self { dims, offsets, total })
    }

    /// Blocks of the power spectrum in the real Fourier basis:
    /// `(1, 1, 2, ..., 2)` for even `n`, `(1, 2, ..., 2)` for odd `n`.
    pub fn power_spectrum(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("N must be at least 1".into()));
        }
        let singletons = if n.is_multiple_of(2) { 2.min(n) } else { 1 };
        let pairs = (n - singletons) / 2;
        let mut dims = vec![1; singletons];
        dims.extend(std::iter::repeat_n(2, pairs));
        Self::new(dims)
    }

    /// Degrees `0..=L` of band-limited functions on the sphere: `(1, 3, ..., 2L+1)`.
    pub fn spherical(band_limit: usize) -> Self {
        Self::new((0..=band_limit).map(|l| 2 * l + 1).collect()).expect("spherical blocks are non-empty and positive")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total dimension `N`.
    pub fn dim(&self) -> usize {
        self.total
    }

    /// Number of blocks `R`.
    pub fn count(&self) -> usize {
        self.dims.len()
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k] + self.dims[k]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.count()).map(|k| self.range(k))
    }

    /// Index of the block containing coordinate `i`.
    pub fn block_of(&self, i: usize) -> usize {
        match self.offsets.binary_search(&i) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    pub(crate) fn check_len(&self, context: &'static str, len: usize) -> Result<()> {
        if len != self.total {
            return Err(Error::mismatch(context, self.total, len));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for BlockStructure {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<BlockStructure> for Vec<usize> {
    fn from(b: BlockStructure) -> Self {
        b.dims
    }
}

/// Per-block energies (power spectrum / second-moment invariants).
///
/// Values computed from a signal are non-negative. Vectors estimated from
/// noisy data go through [`MeasurementVector::estimated`] and may carry small
/// negative entries.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(into = "Vec<f64>")]
pub struct MeasurementVector {
    values: DVector<f64>,
}

impl MeasurementVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "measurement entries must be non-negative, found {v}"
            )));
        }
        Ok(Self { values })
    }

    pub fn estimated(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }
}

impl From<MeasurementVector> for Vec<f64> {
    fn from(m: MeasurementVector) -> Self {
        m.values.as_slice().to_vec()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingKind {
    GeneralLinear,
    SpecialOrthogonal,
}

impl MixingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MixingKind::GeneralLinear => "general-linear",
            MixingKind::SpecialOrthogonal => "special-orthogonal",
        }
    }
}

impl std::fmt::Display for MixingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MixingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general-linear" | "gl" => Ok(MixingKind::GeneralLinear),
            "special-orthogonal" | "so" => Ok(MixingKind::SpecialOrthogonal),
            other => Err(Error::InvalidParameter(format!("unknown mixing kind {other:?}"))),
        }
    }
}

pub const ORTHOGONALITY_TOL: f64 = 1e-10;
pub const CONDITION_TOL: f64 = 1e-12;

/// Square mixing matrix whose rows `w_1, ..., w_N` are grouped by a block structure.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    kind: MixingKind,
}

impl MixingMatrix {
    pub fn new(entries: DMatrix<f64>, kind: MixingKind) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "mixing matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        match kind {
            MixingKind::SpecialOrthogonal => {
                let defect = linalg::orthogonality_defect(&entries);
                if defect > ORTHOGONALITY_TOL {
                    return Err(Error::MixingInvariant {
                        kind: "special-orthogonal",
                        detail: format!("max |A^T A - I| = {defect:e}"),
                    });
                }
                let det = entries.determinant();
                if (det - 1.0).abs() > ORTHOGONALITY_TOL {
                    return Err(Error::MixingInvariant {
                        kind: "special-orthogonal",
                        detail: format!("det = {det}"),
                    });
                }
            }
            MixingKind::GeneralLinear => {
                let sv = linalg::singular_values(&entries);
                let (largest, smallest) = (sv[0], sv[sv.len() - 1]);
                if !(smallest > CONDITION_TOL * largest) {
                    return Err(Error::MixingInvariant {
                        kind: "general-linear",
                        detail: format!("singular values {smallest:e} / {largest:e}"),
                    });
                }
            }
        }
        Ok(Self { entries, kind })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
            kind: MixingKind::SpecialOrthogonal,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> MixingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn apply(&self, x: &Signal) -> Result<Signal> {
        if x.len() != self.dim() {
            return Err(Error::mismatch("mixing", self.dim(), x.len()));
        }
        Ok(Signal::new(&self.entries * x.coeffs()))
    }
}

/// Block structure of the power spectrum (`R = floor(N/2) + 1`).
pub fn block_structure_for_power_spectrum(n: usize) -> Result<BlockStructure> {
    BlockStructure::power_spectrum(n)
}

/// Orthogonal matrix whose rows are the unitary real Fourier basis vectors.
pub fn real_fourier_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidDimension("N must be at least 1".into()));
    }
    let nf = n as f64;
    let mut f = DMatrix::zeros(n, n);
    let dc = 1.0 / nf.sqrt();
    for t in 0..n {
        f[(0, t)] = dc;
    }
    let mut row = 1;
    if n.is_multiple_of(2) && n >= 2 {
        for t in 0..n {
            f[(1, t)] = if t % 2 == 0 { dc } else { -dc };
        }
        row = 2;
    }
    let scale = (2.0 / nf).sqrt();
    let mut k = 1;
    while row < n {
        for t in 0..n {
            let phase = 2.0 * PI * ((k * t) % n) as f64 / nf;
            f[(row, t)] = scale * phase.cos();
            f[(row + 1, t)] = scale * phase.sin();
        }
        row += 2;
        k += 1;
    }
    Ok(f)
}

/// Coordinates of a time-domain vector in the real Fourier basis.
pub fn to_real_fourier(v: &DVector<f64>) -> Result<Signal> {
    let f = real_fourier_matrix(v.len())?;
    Ok(Signal::new(f * v))
}

/// Inverse of [`to_real_fourier`].
pub fn from_real_fourier(x: &Signal) -> Result<DVector<f64>> {
    let f = real_fourier_matrix(x.len())?;
    Ok(f.transpose() * x.coeffs())
}

/// Circular shift `out[t] = v[t - s mod N]`.
pub fn cyclic_shift(v: &DVector<f64>, s: usize) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(n, |t, _| v[(t + n - s % n) % n])
}

/// Time reversal `out[t] = v[-t mod N]`.
pub fn time_reversal(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(n, |t, _| v[(n - t) % n])
}

/// `m2(x)`: sum of squared coefficients over each block.
pub fn second_moment_blocks(x: &Signal, blocks: &BlockStructure) -> Result<MeasurementVector> {
    blocks.check_len("second_moment_blocks", x.len())?;
    Ok(MeasurementVector {
        values: block_energies(x.coeffs(), blocks),
    })
}

pub(crate) fn block_energies(x: &DVector<f64>, blocks: &BlockStructure) -> DVector<f64> {
    DVector::from_iterator(blocks.count(), blocks.ranges().map(|r| x.rows_range(r).norm_squared()))
}

fn check_mixing(x: &Signal, a: &MixingMatrix, blocks: &BlockStructure) -> Result<()> {
    blocks.check_len("block structure vs signal", x.len())?;
    if a.dim() != x.len() {
        return Err(Error::mismatch("mixing matrix vs signal", x.len(), a.dim()));
    }
    Ok(())
}

/// `P(x; A)`: entry `k` is `sum_j <x, w_j>^2` over the rows of block `k`.
pub fn separable_measurement(x: &Signal, a: &MixingMatrix, blocks: &BlockStructure) -> Result<MeasurementVector> {
    check_mixing(x, a, blocks)?;
    Ok(MeasurementVector {
        values: separable_values(x.coeffs(), a.entries(), blocks),
    })
}

pub(crate) fn separable_values(x: &DVector<f64>, a: &DMatrix<f64>, blocks: &BlockStructure) -> DVector<f64> {
    DVector::from_iterator(
        blocks.count(),
        blocks.ranges().map(|r| {
            r.map(|j| {
                let ip = a.row(j).transpose().dot(x);
                ip * ip
            })
            .sum::<f64>()
        }),
    )
}

/// Jacobian of `x -> P(x; A)`; row `k` is `2 sum_j <x, w_j> w_j^T` over block `k`.
pub fn measurement_jacobian(x: &Signal, a: &MixingMatrix, blocks: &BlockStructure) -> Result<DMatrix<f64>> {
    check_mixing(x, a, blocks)?;
    Ok(separable_jacobian(x.coeffs(), a.entries(), blocks))
}

pub(crate) fn separable_jacobian(x: &DVector<f64>, a: &DMatrix<f64>, blocks: &BlockStructure) -> DMatrix<f64> {
    let ax = a * x;
    let mut jac = DMatrix::zeros(blocks.count(), x.len());
    for (k, r) in blocks.ranges().enumerate() {
        for j in r {
            let coef = 2.0 * ax[j];
            for i in 0..x.len() {
                jac[(k, i)] += coef * a[(j, i)];
            }
        }
    }
    jac
}
