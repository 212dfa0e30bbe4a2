use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::Signal;
use crate::rng;

/// Piecewise-linear (semi-algebraic) activation functions.
///
/// Serialised as a short tag: `relu`, `identity`, `leaky-relu(0.1)`,
/// `hardtanh(-1,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    HardTanh(f64, f64),
    Identity,
}

impl Activation {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::LeakyRelu(slope) => {
                if t > 0.0 {
                    t
                } else {
                    slope * t
                }
            }
            Activation::HardTanh(lo, hi) => t.clamp(lo, hi),
            Activation::Identity => t,
        }
    }

    /// One-sided derivative; ReLU'(0) = 0 and kinks take the left branch.
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if t > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::HardTanh(lo, hi) => {
                if t > lo && t < hi {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// `sigma(c t) = c sigma(t)` for all `c > 0`.
    pub fn is_positively_homogeneous(self) -> bool {
        !matches!(self, Activation::HardTanh(..))
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => f.write_str("relu"),
            Activation::Identity => f.write_str("identity"),
            Activation::LeakyRelu(s) => write!(f, "leaky-relu({s})"),
            Activation::HardTanh(lo, hi) => write!(f, "hardtanh({lo},{hi})"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("unknown activation {s:?}"));
        let args = |prefix: &str| -> Result<Vec<f64>> {
            let inner = s
                .strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(bad)?;
            inner
                .split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
                .collect()
        };
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            "hardtanh" => Ok(Activation::HardTanh(-1.0, 1.0)),
            _ if s.starts_with("leaky-relu") => match args("leaky-relu")?.as_slice() {
                [slope] => Ok(Activation::LeakyRelu(*slope)),
                _ => Err(bad()),
            },
            _ if s.starts_with("hardtanh") => match args("hardtanh")?.as_slice() {
                [lo, hi] if lo < hi => Ok(Activation::HardTanh(*lo, *hi)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> Self {
        a.to_string()
    }
}

/// One affine layer followed by an activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: Option<DVector<f64>>,
    pub activation: Activation,
}

impl Layer {
    pub fn linear(weights: DMatrix<f64>, activation: Activation) -> Self {
        Self {
            weights,
            bias: None,
            activation,
        }
    }
}

/// Feed-forward generator `x = s_l(A_l ... s_1(A_1 z))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct GeneratorNetwork {
    layers: Vec<Layer>,
    latent_dim: usize,
}

impl GeneratorNetwork {
    pub fn new(layers: Vec<Layer>, latent_dim: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidDimension("network has no layers".into()));
        }
        let mut width = latent_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.ncols() != width {
                return Err(Error::InvalidDimension(format!(
                    "layer {i} expects input width {} but previous width is {width}",
                    layer.weights.ncols()
                )));
            }
            if let Some(b) = &layer.bias {
                if b.len() != layer.weights.nrows() {
                    return Err(Error::InvalidDimension(format!(
                        "layer {i} bias has length {} for {} outputs",
                        b.len(),
                        layer.weights.nrows()
                    )));
                }
            }
            width = layer.weights.nrows();
        }
        Ok(Self { layers, latent_dim })
    }

    /// Gaussian weights scaled by `1/sqrt(fan_in)`; hidden layers use
    /// `activation`, the output layer is linear.
    pub fn random(
        latent_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rng::stream(seed, 0);
        let mut widths = vec![latent_dim];
        widths.extend_from_slice(hidden);
        widths.push(output_dim);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let scale = 1.0 / (w[0].max(1) as f64).sqrt();
                let act = if i + 2 == widths.len() {
                    Activation::Identity
                } else {
                    activation
                };
                Layer::linear(rng::gaussian_matrix(&mut rng, w[1], w[0]) * scale, act)
            })
            .collect();
        Self::new(layers, latent_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.latent_dim, |l| l.weights.nrows())
    }

    /// Smallest width among the latent space and every layer output.
    pub fn min_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.nrows())
            .fold(self.latent_dim, usize::min)
    }

    pub fn is_positively_homogeneous(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.bias.is_none() && l.activation.is_positively_homogeneous())
    }

    pub fn forward(&self, z: &DVector<f64>) -> Result<Signal> {
        if z.len() != self.latent_dim {
            return Err(Error::mismatch("generator latent", self.latent_dim, z.len()));
        }
        Ok(Signal::new(self.forward_vec(z)))
    }

    pub(crate) fn forward_vec(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut h = z.clone();
        for layer in &self.layers {
            let mut pre = &layer.weights * &h;
            if let Some(b) = &layer.bias {
                pre += b;
            }
            pre.apply(|t| *t = layer.activation.apply(*t));
            h = pre;
        }
        h
    }

    /// Output and Jacobian `dx/dz` by the activation-pattern chain rule.
    pub fn forward_with_jacobian(&self, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mut h = z.clone();
        let mut jac = DMatrix::identity(self.latent_dim, self.latent_dim);
        for layer in &self.layers {
            let mut pre = &layer.weights * &h;
            if let Some(b) = &layer.bias {
                pre += b;
            }
            let mut next = &layer.weights * &jac;
            for (i, &t) in pre.iter().enumerate() {
                let d = layer.activation.derivative(t);
                if d != 1.0 {
                    next.row_mut(i).scale_mut(d);
                }
            }
            pre.apply(|t| *t = layer.activation.apply(*t));
            h = pre;
            jac = next;
        }
        (h, jac)
    }

    /// Copy with the final layer perturbed by Gaussian noise of relative
    /// Frobenius size `rel_scale`.
    pub fn perturb_final_layer(&self, rel_scale: f64, seed: u64) -> Self {
        let mut out = self.clone();
        let last = out.layers.last_mut().expect("network has at least one layer");
        let (r, c) = last.weights.shape();
        let mut noise = rng::gaussian_matrix(&mut rng::stream(seed, 1), r, c);
        let nn = noise.norm();
        if nn > 0.0 {
            noise *= rel_scale * last.weights.norm().max(f64::MIN_POSITIVE) / nn;
        }
        last.weights += noise;
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `generator_forward(net, z)`.
pub fn generator_forward(net: &GeneratorNetwork, z: &DVector<f64>) -> Result<Signal> {
    net.forward(z)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    layers: Vec<LayerFile>,
    latent_dim: usize,
}

impl TryFrom<NetworkFile> for GeneratorNetwork {
    type Error = Error;

    fn try_from(f: NetworkFile) -> Result<Self> {
        let layers = f
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                if l.data.len() != l.rows * l.cols {
                    return Err(Error::Format(format!(
                        "layer {i}: {} values for a {}x{} matrix",
                        l.data.len(),
                        l.rows,
                        l.cols
                    )));
                }
                Ok(Layer {
                    weights: DMatrix::from_row_slice(l.rows, l.cols, &l.data),
                    bias: l.bias.map(DVector::from_vec),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GeneratorNetwork::new(layers, f.latent_dim)
    }
}

impl From<GeneratorNetwork> for NetworkFile {
    fn from(net: GeneratorNetwork) -> Self {
        NetworkFile {
            latent_dim: net.latent_dim,
            layers: net
                .layers
                .into_iter()
                .map(|l| LayerFile {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    data: l.weights.transpose().as_slice().to_vec(),
                    activation: l.activation,
                    bias: l.bias.map(|b| b.as_slice().to_vec()),
                })
                .collect(),
        }
    }
}
