//! Named experiments with default parameters.

use serde_json::{json, Value};

use crate::config::Command;

pub struct Preset {
    pub name: &'static str,
    /// The result the experiment checks.
    pub reference: &'static str,
    pub command: Command,
    pub parameters: fn() -> Value,
}

fn thm1_gl() -> Value {
    json!({
        "prior": {"type": "relu-generator", "latent_dim": 2, "hidden": [9], "output_dim": 9, "seed": 0},
        "mixing": {"kind": "general-linear"},
        "mixing_seeds": [0, 1, 2, 3, 4],
        "seed": 0,
        "search": {"restarts": 200}
    })
}

fn thm2_so() -> Value {
    json!({
        "prior": {"type": "relu-generator", "latent_dim": 2, "hidden": [10], "output_dim": 10, "seed": 0},
        "mixing": {"kind": "special-orthogonal"},
        "mixing_seeds": [0, 1, 2, 3, 4],
        "seed": 0,
        "search": {"restarts": 200},
        "controls": true
    })
}

fn cor_deepnet() -> Value {
    json!({
        "threshold": {
            "family": {"type": "generator", "hidden": [16, 16]},
            "n_range": [4, 10],
            "m_range": [1, 2],
            "kind": "special-orthogonal",
            "seeds": [0, 1],
            "search": {"restarts": 40}
        }
    })
}

fn cor_sparse() -> Value {
    json!({
        "threshold": {
            "family": {"type": "sparse", "kind": "generic-orthonormal"},
            "n_range": [4, 10],
            "m_range": [1, 2],
            "kind": "special-orthogonal",
            "seeds": [0, 1],
            "search": {"restarts": 40}
        }
    })
}

fn codim(n: usize, blocks: Option<[usize; 3]>, manifold: &str) -> Value {
    let mut v = json!({"manifold": manifold, "pairs": 20, "seed": 0});
    match blocks {
        Some(b) => v["blocks"] = json!(b),
        None => v["N"] = json!(n),
    }
    v
}

fn mra_cyclic_n4() -> Value {
    json!({
        "sample_complexity": {
            "prior": {"type": "relu-generator", "latent_dim": 2, "hidden": [10], "output_dim": 8, "seed": 0},
            "mixing": {"kind": "general-linear", "seed": 0},
            "group": {"kind": "cyclic", "N": 8},
            "sigmas": [0.5, 1.0, 2.0],
            "target_error": 0.1,
            "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
            "signal_norm": 0.5
        }
    })
}

fn cor_sphere_so3() -> Value {
    let prior = json!({"type": "relu-generator", "latent_dim": 2, "hidden": [16], "output_dim": 16, "seed": 0});
    let mixing = json!({"kind": "general-linear", "seed": 0});
    json!({
        "group": {"kind": "so3-bandlimited", "L": 3},
        "signal": {"type": "prior", "prior": prior, "mixing": mixing, "seed": 0},
        "n": 100000,
        "sigma": 0.1,
        "seed": 0,
        "recover": {"prior": prior, "mixing": mixing, "seed": 0}
    })
}

fn block_scalar() -> Value {
    json!({
        "group": {"kind": "so3-bandlimited", "L": 4},
        "signal": {"type": "gaussian", "seed": 3},
        "n": 100000,
        "sigma": 0.1,
        "seed": 0
    })
}

static PRESETS: &[Preset] = &[
    Preset {
        name: "thm1-gl",
        reference: "generic GL mixing, ReLU generator K=2, N=9: no collision (N >= 4M regime)",
        command: Command::Collide,
        parameters: thm1_gl,
    },
    Preset {
        name: "thm2-so",
        reference: "generic SO mixing, ReLU generator K=2, N=10: no collision (N ≥ 4M+2 regime); identity-mixing controls collide",
        command: Command::Collide,
        parameters: thm2_so,
    },
    Preset {
        name: "cor-deepnet",
        reference: "deep ReLU generators (hidden [16,16]) under SO mixing: no collision in the N ≥ 4M+2 regime",
        command: Command::Sweep,
        parameters: cor_deepnet,
    },
    Preset {
        name: "cor-sparse",
        reference: "M-sparse signals in a generic orthonormal basis: N ≥ 4M+2 regime under SO mixing",
        command: Command::Sweep,
        parameters: cor_sparse,
    },
    Preset {
        name: "lemma-codim-gl",
        reference: "confusion set in GL(N) has dimension N² - R (N=8: 59)",
        command: Command::ProbeDim,
        parameters: || codim(8, None, "general-linear"),
    },
    Preset {
        name: "prop-codim-so",
        reference: "confusion set in SO(N) has dimension dim SO(N) - (R-1) (N=7: 18)",
        command: Command::ProbeDim,
        parameters: || codim(7, None, "special-orthogonal"),
    },
    Preset {
        name: "codim-sphere-gl",
        reference: "blocks (1,3,5) in GL(9): dimension N² - R = 78",
        command: Command::ProbeDim,
        parameters: || codim(9, Some([1, 3, 5]), "general-linear"),
    },
    Preset {
        name: "codim-sphere-so",
        reference: "blocks (1,3,5) in SO(9): dimension dim SO(9) - 2 = 34",
        command: Command::ProbeDim,
        parameters: || codim(9, Some([1, 3, 5]), "special-orthogonal"),
    },
    Preset {
        name: "mra-cyclic-n4",
        reference: "cyclic MRA under a ReLU prior: sample complexity slope 4 (n ∝ σ⁴)",
        command: Command::Sweep,
        parameters: mra_cyclic_n4,
    },
    Preset {
        name: "cor-sphere-so3",
        reference: "SO(3) MRA with L=3 under a generator prior with GL mixing (L+1 > M): recovery from second moments",
        command: Command::MraSim,
        parameters: cor_sphere_so3,
    },
    Preset {
        name: "appendixB-blockscalar",
        reference: "SO(3) second moment is block scalar, block ℓ = |f[ℓ]|²/(2ℓ+1) I (L=4)",
        command: Command::MraSim,
        parameters: block_scalar,
    },
];

pub fn all() -> &'static [Preset] {
    PRESETS
}

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
