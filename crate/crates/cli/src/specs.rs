//! Declarative descriptions of priors, mixing matrices, groups and signals,
//! and their construction.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use phaseprior::measurements::to_real_fourier;
use phaseprior::mra::{sweep_signal, GroupAction, GroupKind, SampleComplexityConfig};
use phaseprior::priors::{sample_mixing, Activation, GeneratorNetwork, PriorModel, SparseKind, SparsePrior};
use phaseprior::{rng, MixingKind, MixingMatrix, Signal};

use crate::config::ConfigError;

/// Coordinates of a signal given by values: real Fourier blocks or samples in time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    #[default]
    Block,
    Time,
}

fn default_activation() -> Activation {
    Activation::Relu
}

fn default_perturb_scale() -> f64 {
    1e-2
}

/// Final-layer perturbation of a generator, relative to the layer's Frobenius norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    #[serde(default = "default_perturb_scale")]
    pub scale: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    /// Random generator: Gaussian weights, `activation` on hidden layers, linear output.
    ReluGenerator {
        latent_dim: usize,
        hidden: Vec<usize>,
        output_dim: usize,
        #[serde(default = "default_activation")]
        activation: Activation,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        perturb: Option<PerturbSpec>,
    },
    NetworkFile {
        path: PathBuf,
        #[serde(default)]
        perturb: Option<PerturbSpec>,
    },
    Sparse {
        kind: SparseKind,
        #[serde(rename = "N")]
        n: usize,
        sparsity: usize,
        #[serde(default)]
        seed: u64,
    },
    SparseFile {
        path: PathBuf,
    },
    /// No prior: all of `R^N`.
    Full {
        #[serde(rename = "N")]
        n: usize,
    },
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn perturbed(net: GeneratorNetwork, p: &Option<PerturbSpec>, field: &str) -> Result<GeneratorNetwork, ConfigError> {
    match p {
        None => Ok(net),
        Some(p) if p.scale.is_finite() && p.scale >= 0.0 => Ok(net.perturb_final_layer(p.scale, p.seed)),
        Some(p) => Err(ConfigError::at_field(
            format!("{field}.perturb.scale"),
            format!("must be finite and >= 0, got {}", p.scale),
        )),
    }
}

impl PriorSpec {
    /// `field` names the spec's location for error messages.
    pub fn build(&self, base: &Path, field: &str) -> Result<PriorModel, ConfigError> {
        let wrap = |e: phaseprior::Error| ConfigError::at_field(field, e.to_string());
        Ok(match self {
            PriorSpec::ReluGenerator {
                latent_dim,
                hidden,
                output_dim,
                activation,
                seed,
                perturb,
            } => {
                let net =
                    GeneratorNetwork::random(*latent_dim, hidden, *output_dim, *activation, *seed).map_err(wrap)?;
                PriorModel::Generator(perturbed(net, perturb, field)?)
            }
            PriorSpec::NetworkFile { path, perturb } => {
                let net = GeneratorNetwork::load(&resolve(base, path))
                    .map_err(|e| ConfigError::at_field(format!("{field}.path"), format!("{}: {e}", path.display())))?;
                PriorModel::Generator(perturbed(net, perturb, field)?)
            }
            PriorSpec::Sparse {
                kind,
                n,
                sparsity,
                seed,
            } => PriorModel::Sparse(
                match kind {
                    SparseKind::StandardBasis => SparsePrior::standard(*n, *sparsity),
                    SparseKind::GenericOrthonormal => SparsePrior::generic_orthonormal(*n, *sparsity, *seed),
                    SparseKind::GenericLinear => SparsePrior::generic_linear(*n, *sparsity, *seed),
                }
                .map_err(wrap)?,
            ),
            PriorSpec::SparseFile { path } => PriorModel::Sparse(
                SparsePrior::load(&resolve(base, path))
                    .map_err(|e| ConfigError::at_field(format!("{field}.path"), format!("{}: {e}", path.display())))?,
            ),
            PriorSpec::Full { n } => {
                if *n == 0 {
                    return Err(ConfigError::at_field(format!("{field}.N"), "must be positive"));
                }
                PriorModel::Full(*n)
            }
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingChoice {
    #[default]
    Identity,
    GeneralLinear,
    SpecialOrthogonal,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSpec {
    #[serde(default)]
    pub kind: MixingChoice,
    #[serde(default)]
    pub seed: u64,
    /// Explicit entries, one array per row; checked against `kind`.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl MixingSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn build(&self, n: usize, field: &str) -> Result<MixingMatrix, ConfigError> {
        let wrap = |e: phaseprior::Error| ConfigError::at_field(field, e.to_string());
        if let Some(rows) = &self.matrix {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(ConfigError::at_field(
                    format!("{field}.matrix"),
                    format!("expected a {n}x{n} matrix"),
                ));
            }
            let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            let kind = match self.kind {
                MixingChoice::Identity => {
                    return Err(ConfigError::at_field(
                        format!("{field}.kind"),
                        "an explicit matrix needs kind general-linear or special-orthogonal",
                    ))
                }
                MixingChoice::GeneralLinear => MixingKind::GeneralLinear,
                MixingChoice::SpecialOrthogonal => MixingKind::SpecialOrthogonal,
            };
            return MixingMatrix::new(entries, kind).map_err(wrap);
        }
        match self.kind {
            MixingChoice::Identity => Ok(MixingMatrix::identity(n)),
            MixingChoice::GeneralLinear => sample_mixing(n, MixingKind::GeneralLinear, self.seed).map_err(wrap),
            MixingChoice::SpecialOrthogonal => sample_mixing(n, MixingKind::SpecialOrthogonal, self.seed).map_err(wrap),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            MixingChoice::Identity => "identity",
            MixingChoice::GeneralLinear => "general-linear",
            MixingChoice::SpecialOrthogonal => "special-orthogonal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub kind: GroupKind,
    /// Signal length for the cyclic and dihedral actions.
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    /// Band limit for the SO(3) action.
    #[serde(rename = "L", default)]
    pub l: Option<usize>,
}

impl GroupSpec {
    pub fn build(&self, field: &str) -> Result<GroupAction, ConfigError> {
        let wrap = |e: phaseprior::Error| ConfigError::at_field(field, e.to_string());
        match (self.kind, self.n, self.l) {
            (GroupKind::So3Bandlimited, _, Some(l)) => GroupAction::so3(l).map_err(wrap),
            (GroupKind::So3Bandlimited, Some(n), None) => GroupAction::new(self.kind, n).map_err(wrap),
            (GroupKind::So3Bandlimited, None, None) => Err(ConfigError::at_field(
                format!("{field}.L"),
                "the SO(3) action needs a band limit",
            )),
            (_, _, Some(_)) => Err(ConfigError::at_field(
                format!("{field}.L"),
                "a band limit only applies to the SO(3) action",
            )),
            (kind, Some(n), None) => GroupAction::new(kind, n).map_err(wrap),
            (_, None, None) => Err(ConfigError::at_field(format!("{field}.N"), "missing signal length")),
        }
    }
}

fn check_norm(norm: Option<f64>, field: &str) -> Result<(), ConfigError> {
    match norm {
        Some(v) if !(v.is_finite() && v > 0.0) => Err(ConfigError::at_field(
            format!("{field}.norm"),
            format!("must be positive, got {v}"),
        )),
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalSpec {
    Values {
        values: Vec<f64>,
        #[serde(default)]
        domain: Domain,
    },
    /// Standard Gaussian coefficients from stream 0 of `seed`.
    Gaussian {
        seed: u64,
        #[serde(default)]
        norm: Option<f64>,
    },
    /// `A x(z)` for a random latent point of the prior.
    Prior {
        prior: PriorSpec,
        #[serde(default)]
        mixing: MixingSpec,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        norm: Option<f64>,
    },
}

impl SignalSpec {
    pub fn build(&self, group: &GroupAction, base: &Path, field: &str) -> Result<Signal, ConfigError> {
        let n = group.dim();
        let x = match self {
            SignalSpec::Values { values, domain } => {
                signal_from_values(values, *domain, group.kind() != GroupKind::So3Bandlimited, field)?
            }
            SignalSpec::Gaussian { seed, norm } => {
                check_norm(*norm, field)?;
                let v = rng::gaussian_vector(&mut rng::stream(*seed, 0), n);
                let scale = norm.map_or(1.0, |t| t / v.norm());
                Signal::new(v * scale)
            }
            SignalSpec::Prior {
                prior,
                mixing,
                seed,
                norm,
            } => {
                check_norm(*norm, field)?;
                let prior = prior.build(base, &format!("{field}.prior"))?;
                let a = mixing.build(prior.output_dim(), &format!("{field}.mixing"))?;
                let cfg = SampleComplexityConfig {
                    signal_seed: *seed,
                    signal_norm: *norm,
                    ..SampleComplexityConfig::default()
                };
                sweep_signal(&prior, &a, &cfg).map_err(|e| ConfigError::at_field(field, e.to_string()))?
            }
        };
        if x.len() != n {
            return Err(ConfigError::at_field(
                field,
                format!("signal has length {}, the group acts on dimension {n}", x.len()),
            ));
        }
        Ok(x)
    }
}

/// Values in block coordinates, or time samples mapped to real Fourier coordinates.
pub fn signal_from_values(
    values: &[f64],
    domain: Domain,
    fourier_ok: bool,
    field: &str,
) -> Result<Signal, ConfigError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ConfigError::at_field(field, "values must be finite"));
    }
    match domain {
        Domain::Block => Ok(Signal::from_slice(values)),
        Domain::Time if fourier_ok => to_real_fourier(&DVector::from_column_slice(values))
            .map_err(|e| ConfigError::at_field(field, e.to_string())),
        Domain::Time => Err(ConfigError::at_field(
            format!("{field}.domain"),
            "time-domain values need the power-spectrum block structure",
        )),
    }
}
