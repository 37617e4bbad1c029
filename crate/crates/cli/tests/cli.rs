use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn agepin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agepin")).args(args).output().unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const SMALL_FIG3B: &str = "preset = \"fig3b\"\n[numerics]\nnx = 40\nna = 20\nt_final = 1.0\n";

#[test]
fn small_fig3b_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "small.toml", SMALL_FIG3B);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = agepin(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["name"], "fig3b");
    assert!(summary["mass_drift"].as_f64().unwrap() < 1e-9);
    assert!(summary["runtime_seconds"].is_number());
    assert!(summary["clusters"]["count"].is_u64());
    let files = summary["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f == "snapshot.csv"));
    for f in files {
        let f = f.as_str().unwrap();
        if f.ends_with(".csv") {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn sde_seed_flag_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sde.toml", "preset = \"fig2b\"\n[numerics]\nn_agents = 40\nt_final = 0.5\n");
    let out = dir.path().join("o");
    let o = agepin(&["run", "--config", &cfg, "--seed", "11", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["config"]["numerics"]["n_agents"], 40);
    let head = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(head.starts_with("t,agent_id,age,opinion,entry_time\n"));
}

#[test]
fn missing_field_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "bad.toml",
        "mode = \"pde\"\n[model]\ntau = 0.1\ninteraction = { kind = \"constant\" }\nmu = \"uniform\"\n",
    );
    let o = agepin(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfl = config(dir.path(), "cfl.toml", "preset = \"fig3a\"\n[numerics]\ndt = 1.0\n");
    assert_eq!(agepin(&["run", "--config", &cfl]).status.code(), Some(3));
    assert_eq!(agepin(&["run", "--preset", "fig9"]).status.code(), Some(2));
    assert_eq!(agepin(&["sweep", "--preset", "fig3a"]).status.code(), Some(2));
    assert_eq!(agepin(&["check", "--preset", "fig2b"]).status.code(), Some(2));
    assert_eq!(agepin(&["run"]).status.code(), Some(2));
    let diverge = config(
        dir.path(),
        "nc.toml",
        "preset = \"nonuniqueness\"\n[numerics]\nnx = 40\nreference_factor = 1\nmax_iter = 2\nlambda0 = [\"uniform\"]\n[model]\nmu = \"uniform\"\n",
    );
    let out = dir.path().join("nc");
    let o = agepin(&["run", "--config", &diverge, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn presets_are_listed() {
    let o = agepin(&["presets"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for p in ["fig2a", "fig3f", "variance", "nonuniqueness", "tau_sweep"] {
        assert!(text.lines().any(|l| l == p), "{p}");
    }
}
