//! Artifacts of a run: `results.csv`, `report.json` and provenance.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::runner::Outcome;

/// Content hash of the configuration text, computed like a git blob id but with SHA-256.
pub fn config_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Every integer found under a key mentioning "seed", in key order.
pub fn collect_seeds(v: &Value) -> Vec<u64> {
    fn numbers(v: &Value, out: &mut Vec<u64>) {
        match v {
            Value::Number(n) => out.extend(n.as_u64()),
            Value::Array(a) => a.iter().for_each(|x| numbers(x, out)),
            _ => {}
        }
    }
    fn walk(v: &Value, out: &mut Vec<u64>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    if k.contains("seed") {
                        numbers(x, out);
                    }
                    walk(x, out);
                }
            }
            Value::Array(a) => a.iter().for_each(|x| walk(x, out)),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(v, &mut out);
    let mut seen = std::collections::HashSet::new();
    out.retain(|s| seen.insert(*s));
    out
}

pub struct Provenance {
    pub wall_time: f64,
    pub threads: usize,
}

pub fn report(cfg: &ExperimentConfig, out: &Outcome, prov: &Provenance) -> Value {
    let source: Value = serde_json::from_str(&cfg.source).unwrap_or(Value::Null);
    json!({
        "command": cfg.command,
        "preset": cfg.preset,
        "config_echo": {
            "source": source,
            "resolved_parameters": cfg.resolved_parameters,
        },
        "results": out.results,
        "flags": out.flags,
        "provenance": {
            "seeds": collect_seeds(&cfg.resolved_parameters),
            "config_sha256": config_hash(&cfg.source),
            "wall_time_seconds": prov.wall_time,
            "threads": prov.threads,
            "version": env!("CARGO_PKG_VERSION"),
        },
    })
}

/// Write all artifacts into `dir`, creating it if needed; returns the paths written.
pub fn write_artifacts(dir: &Path, report: &Value, out: &Outcome) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = dir.join("results.csv");
    std::fs::write(&csv, &out.csv)?;
    written.push(csv);
    let json = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(&json, text)?;
    written.push(json);
    for (name, bytes) in &out.files {
        let p = dir.join(name);
        std::fs::write(&p, bytes)?;
        written.push(p);
    }
    Ok(written)
}
