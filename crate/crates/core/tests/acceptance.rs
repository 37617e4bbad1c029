//! Acceptance criteria A1–A12, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the verdicts are always printed. Set
//! `AGEPIN_ACCEPTANCE=A3,A7` to run a subset.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use agepin_core::experiment::{preset, run_experiment, ExperimentConfig, Scale, Summary};
use agepin_core::model::{AgeKernel, InteractionFunction};
use agepin_core::sde::{drift, AgentPopulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Preset runs shared between criteria, each executed at most once.
struct Runs {
    root: PathBuf,
    done: BTreeMap<String, (Summary, PathBuf)>,
}

impl Runs {
    fn get(&mut self, key: &str, cfg: impl FnOnce() -> ExperimentConfig) -> (Summary, PathBuf) {
        if let Some(r) = self.done.get(key) {
            return r.clone();
        }
        let dir = self.root.join(key);
        let cfg = cfg();
        let s = run_experiment(&cfg, &dir, 1).unwrap_or_else(|e| panic!("{key}: {e}"));
        self.done.insert(key.into(), (s.clone(), dir.clone()));
        (s, dir)
    }

    fn preset(&mut self, name: &str) -> Summary {
        self.get(name, || desk(name)).0
    }
}

fn desk(name: &str) -> ExperimentConfig {
    preset(name, Scale::Desk).unwrap()
}

fn fig3e() -> ExperimentConfig {
    let mut c = desk("fig3e");
    c.outputs.totals_every = Some(400);
    c
}

fn tau_sweep() -> ExperimentConfig {
    let mut c = desk("tau_sweep");
    c.numerics.taus = vec![0.15, 0.30, 0.35];
    c
}

fn a1(runs: &mut Runs) -> Verdict {
    let s = runs.preset("variance");
    let e0 = s.residuals["variance_max_error"];
    let e1 = s.residuals["variance_max_error_level1"];
    let ratio = e1 / e0;
    let pass = e0 <= 2e-2 && (0.35..=0.65).contains(&ratio) && s.runtime_seconds <= 300.0;
    verdict(
        pass,
        format!(
            "max |v - v_closed| {e0:.3e} at 200x200 (<= 2e-2), {e1:.3e} at 400x400, ratio {ratio:.3} (need 0.5 +/- 30%), {:.1} s",
            s.runtime_seconds
        ),
    )
}

const A2_RUNS: &[&str] = &[
    "fig2a", "fig2b", "fig2c", "fig2d", "fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "variance", "nonuniqueness",
    "tau_sweep", "mk", "oracles",
];

fn a2(runs: &mut Runs) -> Verdict {
    let mut worst = (0.0f64, "");
    for &name in A2_RUNS {
        let s = match name {
            "fig3e" => runs.get(name, fig3e).0,
            "tau_sweep" => runs.get(name, tau_sweep).0,
            _ => runs.preset(name),
        };
        if s.mass_drift >= worst.0 {
            worst = (s.mass_drift, name);
        }
    }
    verdict(
        worst.0 <= 1e-9,
        format!("largest |mass - 1| {:.3e} ({}) over {} preset runs; fig3f not run", worst.0, worst.1, A2_RUNS.len()),
    )
}

fn a3(runs: &mut Runs) -> Verdict {
    let a = runs.preset("fig3a");
    let b = runs.preset("fig3b");
    let one = a.clusters.count == 1 && a.clusters.positions[0].abs() <= 0.05;
    let p = &b.clusters.positions;
    let two = b.clusters.count == 2 && (p[0] + p[1]).abs() <= 0.05;
    let quick = a.runtime_seconds <= 600.0 && b.runtime_seconds <= 600.0;
    verdict(
        one && two && quick,
        format!(
            "fig3a {} cluster(s) at {:?}; fig3b {} cluster(s) at {:?}; {:.1} s and {:.1} s",
            a.clusters.count, a.clusters.positions, b.clusters.count, p, a.runtime_seconds, b.runtime_seconds
        ),
    )
}

fn a4(runs: &mut Runs) -> Verdict {
    let r200 = runs.preset("nonuniqueness").residuals["mu_fixed_point"];
    let (s400, _) = runs.get("nonuniqueness_400", || {
        let mut c = desk("nonuniqueness");
        c.numerics.nx = 400;
        c
    });
    let r400 = s400.residuals["mu_fixed_point"];
    let gain = r200 / r400;
    verdict(
        r200 <= 5e-3 && gain >= 1.5,
        format!("|F(mu2) - mu2|_inf {r200:.3e} at J_x=200 (<= 5e-3), {r400:.3e} at 400, gain {gain:.2} (>= 1.5)"),
    )
}

fn branch<'a>(s: &'a Summary, dir: &str) -> &'a Value {
    s.details["branches"]
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["dir"] == dir)
        .unwrap()
}

fn a5(runs: &mut Runs) -> Verdict {
    let s = runs.preset("nonuniqueness");
    let (b1, b2) = (branch(&s, "lambda0_mu1"), branch(&s, "lambda0_mu2"));
    let r1 = b1["residual_inf"].as_f64().unwrap();
    let r2 = b2["residual_inf"].as_f64().unwrap();
    let gap = s.details["l1_gaps"][0]["l1"].as_f64().unwrap();
    let peaks = b1["peaks"].as_u64().unwrap();
    let converged = b1["converged"] == true && b2["converged"] == true;
    verdict(
        converged && r1 <= 1e-6 && r2 <= 1e-6 && gap > 0.1 && peaks == 1,
        format!("residuals {r1:.2e} (mu1 start), {r2:.2e} (mu2 start); L1 gap {gap:.3} (> 0.1); mu1 branch {peaks} peak(s)"),
    )
}

fn a6(runs: &mut Runs) -> Verdict {
    let s = runs.get("tau_sweep", tau_sweep).0;
    let points = s.details["points"].as_array().unwrap();
    let at = |tau: f64| points.iter().find(|p| (p["tau"].as_f64().unwrap() - tau).abs() < 1e-12).unwrap();
    let describe = |p: &Value| {
        format!(
            "tau {}: {} peak(s), L1 to mu2 {:.3e}",
            p["tau"],
            p["peaks"],
            p["l1_to_mu"].as_f64().unwrap_or(f64::NAN)
        )
    };
    let (p1, p2, p3) = (at(0.15), at(0.30), at(0.35));
    let ok1 = p1["peaks"] == 1;
    let ok2 = p2["peaks"] == 2 && p2["l1_to_mu"].as_f64().unwrap_or(0.0) > 2e-2;
    let ok3 = p3["l1_to_mu"].as_f64().unwrap_or(f64::INFINITY) <= 2e-2;
    verdict(
        ok1 && ok2 && ok3 && s.runtime_seconds <= 900.0,
        format!(
            "{}; {}; {}; {:.1} s",
            describe(p1),
            describe(p2),
            describe(p3),
            s.runtime_seconds
        ),
    )
}

fn a7(runs: &mut Runs) -> Verdict {
    let s = runs.preset("oracles");
    let (d, z, o) = (s.residuals["delta_kernel"], s.residuals["tau_zero"], s.residuals["ou"]);
    verdict(
        d <= 5e-3 && z <= 1e-8 && o <= 5e-3,
        format!("64x32 sup norms: same-age kernel {d:.3e} (<= 5e-3), tau = 0 {z:.3e} (<= 1e-8), OU {o:.3e} (<= 5e-3)"),
    )
}

fn a8(runs: &mut Runs) -> Verdict {
    let s = runs.preset("mk");
    let dev = s.residuals["marginal_deviation_exact"];
    let ratio = s.residuals["mk_refinement_ratio"];
    let levels: Vec<String> = s.details["levels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| format!("{:.3e}", l["max_residual"].as_f64().unwrap()))
        .collect();
    verdict(
        dev <= 5e-3 && ratio >= 1.5,
        format!(
            "age marginal vs 2(1-a) {dev:.2e} (<= 5e-3); interior residual {}, worst drop {ratio:.2} (>= 1.5)",
            levels.join(" -> ")
        ),
    )
}

fn a9(runs: &mut Runs) -> Verdict {
    let mut mirror = 0.0f64;
    let mut ages = 0.0f64;
    for name in ["fig3a", "fig3b", "fig3c", "fig3d", "fig3e"] {
        let s = if name == "fig3e" { runs.get(name, fig3e).0 } else { runs.preset(name) };
        mirror = mirror.max(s.residuals["mirror_defect"]);
        ages = ages.max(s.residuals["age_marginal_defect"]);
    }
    verdict(
        mirror <= 1e-12 && ages <= 1e-12,
        format!("fig3a-e: max mirror defect {mirror:.2e}, max age-marginal defect {ages:.2e} (both <= 1e-12)"),
    )
}

fn a10(runs: &mut Runs) -> Verdict {
    let (pde, _) = runs.get("fig3b_t50", || {
        let mut c = desk("fig3b");
        c.numerics.t_final = 50.0;
        c
    });
    let target = pde.clusters.positions.clone();
    let mut worst = 0.0f64;
    let mut counts = Vec::new();
    let mut matched = true;
    for seed in 0..4u64 {
        let (s, _) = runs.get(&format!("fig2b_n2000_seed{seed}"), || {
            let mut c = desk("fig2b");
            c.numerics.n_agents = 2000;
            c.numerics.seed = seed;
            c
        });
        counts.push(s.clusters.count);
        if s.clusters.count != target.len() {
            matched = false;
            continue;
        }
        for (a, b) in s.clusters.positions.iter().zip(&target) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        matched && worst <= 0.1,
        format!("PDE clusters at {target:.3?}; agent cluster counts {counts:?}; largest position gap {worst:.3} (<= 0.1)"),
    )
}

fn a11(runs: &mut Runs) -> Verdict {
    let (s, dir) = runs.get("fig3e", fig3e);
    let series = cluster_counts(&dir.join("clusters.csv"), &s);
    let states: Vec<(f64, bool)> = series.into_iter().filter(|(t, _)| *t > 50.0).map(|(t, n)| (t, n >= 2)).collect();
    let mut merges = Vec::new();
    let mut reforms = 0;
    for w in states.windows(2) {
        match (w[0].1, w[1].1) {
            (true, false) => merges.push(w[1].0),
            (false, true) => reforms += 1,
            _ => {}
        }
    }
    verdict(
        merges.len() >= 3 && reforms >= 3,
        format!(
            "after t = 50: {} merges (2+ -> 1) at t = {:.1?}, {} re-formations (1 -> 2+)",
            merges.len(),
            merges,
            reforms
        ),
    )
}

/// Cluster count at every recorded time, including times with none.
fn cluster_counts(path: &Path, s: &Summary) -> Vec<(f64, usize)> {
    let recorded: Vec<(f64, usize)> = s.details["cluster_counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p[0].as_f64().unwrap(), p[1].as_u64().unwrap() as usize))
        .collect();
    // the CSV carries the same counts row by row
    let text = std::fs::read_to_string(path).unwrap();
    let rows = text.lines().skip(1).count();
    assert_eq!(rows, recorded.iter().map(|(_, n)| n).sum::<usize>());
    recorded
}

fn naive_drift(pop: &AgentPopulation, f: &InteractionFunction, kernel: &AgeKernel) -> Vec<f64> {
    let n = pop.len();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                let r = pop.opinions[j] - pop.opinions[i];
                acc += kernel.eval(pop.ages[i], pop.ages[j], 1.0).unwrap() * f.phi(r) * r;
            }
            acc / n as f64
        })
        .collect()
}

fn a12(_: &mut Runs) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=64);
        let pop = AgentPopulation {
            ages: (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
            opinions: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            entry_times: vec![f64::NEG_INFINITY; n],
            time: 0.0,
        };
        let f = if rng.random_bool(0.2) {
            InteractionFunction::Constant
        } else {
            let r1 = rng.random_range(0.05..0.6);
            InteractionFunction::BoundedConfidence {
                r1,
                r2: r1 + rng.random_range(0.01..0.4),
            }
        };
        let cells = rng.random_range(1..=8);
        let kernel = match rng.random_range(0..3) {
            0 => AgeKernel::Uniform,
            1 => AgeKernel::OfTargetAgeOnly {
                values: (0..cells).map(|_| rng.random_range(0.0..2.0)).collect(),
            },
            _ => AgeKernel::Tabulated {
                n: cells,
                values: (0..cells * cells).map(|_| rng.random_range(0.0..2.0)).collect(),
            },
        };
        let fast = drift(&pop, &f, &kernel, 1.0).unwrap();
        for (a, b) in fast.iter().zip(naive_drift(&pop, &f, &kernel)) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(worst <= 1e-14, format!("100 random instances, N <= 64: max |fast - naive| {worst:.2e} (<= 1e-14)"))
}

type Criterion = fn(&mut Runs) -> Verdict;

fn main() {
    let criteria: &[(&str, Criterion)] = &[
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
        ("A11", a11),
        ("A12", a12),
    ];
    let only: Option<Vec<String>> = std::env::var("AGEPIN_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').map(|s| s.trim().to_uppercase()).collect());
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Runs {
        root: tmp.path().to_path_buf(),
        done: BTreeMap::new(),
    };
    let start = Instant::now();
    let mut failed = Vec::new();
    for (id, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| check(&mut runs))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let word = if v.pass { "PASS" } else { "FAIL" };
        println!("{id:<4}{word}  {}  [{:.1} s]", v.detail, t.elapsed().as_secs_f64());
        if !v.pass {
            failed.push(*id);
        }
    }
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
