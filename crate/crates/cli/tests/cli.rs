use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phaseprior"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path) -> Output {
    bin()
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn measure_writes_the_expected_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "m.json",
        r#"{"schema_version": 1, "command": "measure", "parameters": {"N": 5, "x": [1, 1, 2, 2, 3]}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().nth(1), Some("1,5,13"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    assert!(report["provenance"]["wall_time_seconds"].is_number());
}

#[test]
fn unknown_field_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        "{\n  \"schema_version\": 1,\n  \"command\": \"probe-dim\",\n  \"parameters\": {\n    \"N\": 7,\n    \"manifold\": \"special-orthogonal\",\n    \"pairz\": 3\n  }\n}\n",
    );
    let o = run(&cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 7"), "{e}");
    assert!(e.contains("pairz"), "{e}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_json_and_schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.json", "{\"schema_version\": 1,\n \"command\": }"),
        (
            "version.json",
            r#"{"schema_version": 9, "command": "measure", "parameters": {"x": [1]}}"#,
        ),
        (
            "type.json",
            r#"{"schema_version": 1, "command": "measure", "parameters": {"x": "abc"}}"#,
        ),
        (
            "nofile.json",
            r#"{"schema_version": 1, "command": "collide", "parameters": {"prior": {"type": "network-file", "path": "missing.json"}}}"#,
        ),
        (
            "badmix.json",
            r#"{"schema_version": 1, "command": "measure", "parameters": {"x": [1, 2], "mixing": {"kind": "special-orthogonal", "matrix": [[1, 1], [0, 1]]}}}"#,
        ),
        (
            "nooutput.json",
            r#"{"schema_version": 1, "command": "measure", "parameters": {"x": [1]}}"#,
        ),
    ];
    for (name, text) in cases {
        let cfg = write_config(dir.path(), name, text);
        let o = if name == "nooutput.json" {
            bin().args(["run", "--config"]).arg(&cfg).output().unwrap()
        } else {
            run(&cfg, &dir.path().join("out"))
        };
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
    }
    let o = bin()
        .args(["validate", "--config"])
        .arg(dir.path().join("nofile.json"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("parameters.prior.path"), "{}", stderr(&o));
}

#[test]
fn network_files_resolve_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let net =
        phaseprior::priors::GeneratorNetwork::random(1, &[4], 5, phaseprior::priors::Activation::Relu, 3).unwrap();
    std::fs::create_dir(dir.path().join("nets")).unwrap();
    std::fs::write(dir.path().join("nets/g.json"), net.to_json()).unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1, "command": "collide", "output_dir": "res",
            "parameters": {"prior": {"type": "network-file", "path": "nets/g.json"},
                           "mixing": {"kind": "general-linear", "seed": 2}, "search": {"restarts": 10}}}"#,
    );
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("res/results.csv")).unwrap();
    assert!(csv.starts_with("case,N,M_hat,kind,mixing_seed,verdict"));
    assert!(csv.lines().nth(1).unwrap().starts_with("search,5,1,general-linear,2,"));
}

#[test]
fn probe_dim_preset_reports_bound_18() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.json",
        r#"{"schema_version": 1, "preset": "prop-codim-so", "parameters": {"pairs": 4}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "theoretical_bound").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert_eq!(r.split(',').nth(col), Some("18"));
    }
}

#[test]
fn collide_preset_finds_no_collision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"schema_version": 1, "preset": "thm1-gl"}"#);
    let out = dir.path().join("out");
    let o = run(&cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.contains(",no-collision-found,")));
    assert!(rows.iter().all(|r| r.starts_with("search,9,2,")));
}

#[test]
fn presets_are_listed() {
    let o = bin().arg("presets").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(rows.len() >= 9);
    for name in [
        "thm1-gl",
        "thm2-so",
        "cor-deepnet",
        "cor-sparse",
        "lemma-codim-gl",
        "prop-codim-so",
        "mra-cyclic-n4",
        "cor-sphere-so3",
        "appendixB-blockscalar",
    ] {
        assert!(rows.iter().any(|r| r.starts_with(&format!("{name}\t"))), "{name}");
    }
    let row = |name: &str| *rows.iter().find(|r| r.starts_with(&format!("{name}\t"))).unwrap();
    assert!(row("cor-sparse").contains("N ≥ 4M+2"));
    assert!(row("mra-cyclic-n4").contains("slope 4"));
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"schema_version": 1, "command": "mra-sim",
            "parameters": {"group": {"kind": "dihedral", "N": 6}, "signal": {"type": "gaussian", "seed": 1},
                           "n": 20000, "sigma": 0.7, "seed": 5, "save_observations": true}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&cfg, &a).status.success());
    let o = bin()
        .args(["run", "--threads", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(a.join("results.csv")).unwrap(),
        std::fs::read(b.join("results.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("observations.bin")).unwrap(),
        std::fs::read(b.join("observations.bin")).unwrap()
    );
    let obs = phaseprior::mra::load_observations(&a.join("observations.bin")).unwrap();
    assert_eq!(obs.n(), 20000);
}

#[test]
fn non_convergence_is_a_flag_not_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "n.json",
        r#"{"schema_version": 1, "command": "probe-dim",
            "parameters": {"N": 6, "manifold": "special-orthogonal", "pairs": 2, "equal_norms": false}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["flags"].as_array().unwrap().len(), 2);
}
