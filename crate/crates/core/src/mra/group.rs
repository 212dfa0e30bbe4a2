//! Group actions in block coordinates.
//!
//! Signals for the cyclic and dihedral groups are written in the real
//! Fourier basis (see [`crate::measurements::to_real_fourier`]), where a
//! shift rotates every frequency pair and a reflection negates the sine
//! coefficients. Signals for SO(3) are real spherical-harmonic coefficients
//! of a band-limited function, acted on by real Wigner-D blocks.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::wigner::{real_wigner_blocks, MAX_BAND_LIMIT};
use crate::error::{Error, Result};
use crate::measurements::{BlockStructure, Signal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    #[serde(rename = "cyclic")]
    Cyclic,
    #[serde(rename = "dihedral")]
    Dihedral,
    #[serde(rename = "so3-bandlimited")]
    So3Bandlimited,
}

impl GroupKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::Cyclic => "cyclic",
            GroupKind::Dihedral => "dihedral",
            GroupKind::So3Bandlimited => "so3-bandlimited",
        }
    }

    /// Tag byte used by the observation file format.
    pub fn tag(self) -> u8 {
        match self {
            GroupKind::Cyclic => 0,
            GroupKind::Dihedral => 1,
            GroupKind::So3Bandlimited => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(GroupKind::Cyclic),
            1 => Ok(GroupKind::Dihedral),
            2 => Ok(GroupKind::So3Bandlimited),
            t => Err(Error::Format(format!("unknown group tag {t}"))),
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cyclic" => Ok(GroupKind::Cyclic),
            "dihedral" => Ok(GroupKind::Dihedral),
            "so3-bandlimited" | "so3" => Ok(GroupKind::So3Bandlimited),
            other => Err(Error::InvalidParameter(format!("unknown group kind '{other}'"))),
        }
    }
}

/// A group together with its orthogonal representation on `R^N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupAction {
    kind: GroupKind,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    band_limit: Option<usize>,
}

/// One group element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum GroupElement {
    Shift {
        shift: usize,
    },
    /// Reflection `t -> -t` followed by the shift.
    Dihedral {
        shift: usize,
        reflect: bool,
    },
    /// ZYZ Euler angles.
    Rotation {
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
}

impl GroupAction {
    pub fn cyclic(n: usize) -> Result<Self> {
        Self::finite(GroupKind::Cyclic, n)
    }

    pub fn dihedral(n: usize) -> Result<Self> {
        Self::finite(GroupKind::Dihedral, n)
    }

    fn finite(kind: GroupKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("N must be at least 1".into()));
        }
        Ok(Self {
            kind,
            dim: n,
            band_limit: None,
        })
    }

    /// SO(3) on functions of band limit `L`, `N = (L+1)^2`.
    pub fn so3(band_limit: usize) -> Result<Self> {
        if band_limit > MAX_BAND_LIMIT {
            return Err(Error::Unsupported(format!(
                "band limit {band_limit} exceeds the supported maximum {MAX_BAND_LIMIT}"
            )));
        }
        Ok(Self {
            kind: GroupKind::So3Bandlimited,
            dim: (band_limit + 1) * (band_limit + 1),
            band_limit: Some(band_limit),
        })
    }

    /// Group of the given kind acting on `R^dim`; for SO(3) `dim` must be a square.
    pub fn new(kind: GroupKind, dim: usize) -> Result<Self> {
        match kind {
            GroupKind::Cyclic | GroupKind::Dihedral => Self::finite(kind, dim),
            GroupKind::So3Bandlimited => {
                let root = (dim as f64).sqrt().round() as usize;
                if root == 0 || root * root != dim {
                    return Err(Error::InvalidDimension(format!("SO(3) needs N = (L+1)^2, got {dim}")));
                }
                Self::so3(root - 1)
            }
        }
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn band_limit(&self) -> Option<usize> {
        self.band_limit
    }

    /// Irreducible block structure of the representation.
    pub fn blocks(&self) -> BlockStructure {
        match self.band_limit {
            Some(l) => BlockStructure::spherical(l),
            None => BlockStructure::power_spectrum(self.dim).expect("dimension checked at construction"),
        }
    }

    /// Number of elements of a finite group.
    pub fn order(&self) -> Option<usize> {
        match self.kind {
            GroupKind::Cyclic => Some(self.dim),
            GroupKind::Dihedral => Some(2 * self.dim),
            GroupKind::So3Bandlimited => None,
        }
    }

    /// All elements of a finite group.
    pub fn elements(&self) -> Option<Vec<GroupElement>> {
        match self.kind {
            GroupKind::Cyclic => Some((0..self.dim).map(|shift| GroupElement::Shift { shift }).collect()),
            GroupKind::Dihedral => Some(
                [false, true]
                    .into_iter()
                    .flat_map(|reflect| (0..self.dim).map(move |shift| GroupElement::Dihedral { shift, reflect }))
                    .collect(),
            ),
            GroupKind::So3Bandlimited => None,
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self.kind {
            GroupKind::Cyclic => GroupElement::Shift { shift: 0 },
            GroupKind::Dihedral => GroupElement::Dihedral {
                shift: 0,
                reflect: false,
            },
            GroupKind::So3Bandlimited => GroupElement::Rotation {
                alpha: 0.0,
                beta: 0.0,
                gamma: 0.0,
            },
        }
    }

    /// Uniform (Haar) random element.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        match self.kind {
            GroupKind::Cyclic => GroupElement::Shift {
                shift: rng.random_range(0..self.dim),
            },
            GroupKind::Dihedral => {
                let shift = rng.random_range(0..self.dim);
                GroupElement::Dihedral {
                    shift,
                    reflect: rng.random_bool(0.5),
                }
            }
            GroupKind::So3Bandlimited => {
                let alpha = 2.0 * PI * rng.random::<f64>();
                let beta = (2.0 * rng.random::<f64>() - 1.0).clamp(-1.0, 1.0).acos();
                let gamma = 2.0 * PI * rng.random::<f64>();
                GroupElement::Rotation { alpha, beta, gamma }
            }
        }
    }

    fn validate(&self, g: &GroupElement) -> Result<()> {
        let ok = match (*g, self.kind) {
            (GroupElement::Shift { shift }, GroupKind::Cyclic | GroupKind::Dihedral) => shift < self.dim,
            (GroupElement::Dihedral { shift, .. }, GroupKind::Dihedral) => shift < self.dim,
            (GroupElement::Rotation { alpha, beta, gamma }, GroupKind::So3Bandlimited) => {
                alpha.is_finite() && beta.is_finite() && gamma.is_finite()
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{g:?} is not an element of the {} group on R^{}",
                self.kind, self.dim
            )))
        }
    }

    /// Orthogonal matrix of `g` in block coordinates.
    pub fn action_matrix(&self, g: &GroupElement) -> Result<DMatrix<f64>> {
        self.validate(g)?;
        let op = self.operator(g)?;
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut e = vec![0.0; self.dim];
        let mut col = vec![0.0; self.dim];
        for j in 0..self.dim {
            e[j] = 1.0;
            op.apply(&e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        Ok(m)
    }

    pub(crate) fn operator(&self, g: &GroupElement) -> Result<Operator> {
        Ok(match *g {
            GroupElement::Shift { shift } => Operator::Fourier { shift, reflect: false },
            GroupElement::Dihedral { shift, reflect } => Operator::Fourier { shift, reflect },
            GroupElement::Rotation { alpha, beta, gamma } => {
                let l = self.band_limit.expect("rotation validated against SO(3)");
                Operator::Blocks(real_wigner_blocks(l, alpha, beta, gamma)?)
            }
        })
    }
}

/// A group element prepared for repeated application.
pub(crate) enum Operator {
    Fourier { shift: usize, reflect: bool },
    Blocks(Vec<DMatrix<f64>>),
}

impl Operator {
    pub(crate) fn apply(&self, src: &[f64], dst: &mut [f64]) {
        let n = src.len();
        match self {
            Operator::Fourier { shift, reflect } => {
                dst[0] = src[0];
                let mut row = 1;
                if n.is_multiple_of(2) && n >= 2 {
                    dst[1] = if shift % 2 == 1 { -src[1] } else { src[1] };
                    row = 2;
                }
                let mut k = 1;
                while row < n {
                    let phi = 2.0 * PI * ((k * shift) % n) as f64 / n as f64;
                    let (s, c) = phi.sin_cos();
                    let a = src[row];
                    let b = if *reflect { -src[row + 1] } else { src[row + 1] };
                    dst[row] = c * a - s * b;
                    dst[row + 1] = s * a + c * b;
                    row += 2;
                    k += 1;
                }
            }
            Operator::Blocks(blocks) => {
                let mut off = 0;
                for b in blocks {
                    let d = b.nrows();
                    for i in 0..d {
                        let mut acc = 0.0;
                        for j in 0..d {
                            acc += b[(i, j)] * src[off + j];
                        }
                        dst[off + i] = acc;
                    }
                    off += d;
                }
            }
        }
    }
}

/// `g . x`.
pub fn act(g: &GroupElement, x: &Signal, group: &GroupAction) -> Result<Signal> {
    if x.len() != group.dim() {
        return Err(Error::mismatch("group action", group.dim(), x.len()));
    }
    group.validate(g)?;
    let op = group.operator(g)?;
    let mut out = vec![0.0; x.len()];
    op.apply(x.as_slice(), &mut out);
    Ok(Signal::new(DVector::from_vec(out)))
}
