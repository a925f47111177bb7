use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edge_sim_core::metrics::true_arrival_means;
use edge_sim_core::scenario::load_scenario;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn edge_sim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edge-sim"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn theorem() -> String {
    scenarios().join("theorem.json").display().to_string()
}

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}

/// Writes a variant of the theorem scenario with replaced device processes.
fn variant(dir: &Path, budget: f64, capacity: f64) -> String {
    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(theorem()).unwrap()).unwrap();
    doc["devices"]["B_process"] =
        serde_json::json!({"kind": "constant", "value": budget, "bound": budget.max(1.0)});
    doc["cloudlet"]["H_process"] =
        serde_json::json!({"kind": "constant", "value": capacity, "bound": capacity});
    let path = dir.join("variant.json");
    fs::write(&path, doc.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn run_emits_every_tenth_slot() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_sim(
        dir.path(),
        &[
            "run",
            "--config",
            &theorem(),
            "--policy",
            "onalgo",
            "--horizon",
            "10000",
            "--out",
            "r.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 1000);
    assert!(text.starts_with(
        "t,f_ybar,f_star,gap,bound,feas_norm,xi,mu_0,mu_1,mu_2,mu_3,mu_4,offload_ratio,\
         realized_gain,energy_total,denials,eff_accuracy\n"
    ));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.csv.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["policy"], "onalgo");
    assert_eq!(manifest["horizon"], 10000);
    assert_eq!(manifest["scenario_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn run_to_stdout_honours_emit_every() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_sim(
        dir.path(),
        &[
            "run",
            "--config",
            &theorem(),
            "--horizon",
            "95",
            "--emit-every",
            "20",
        ],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(column(&text, "t"), vec![20.0, 40.0, 60.0, 80.0, 95.0]);
}

#[test]
fn no_policy_spends_no_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_sim(
        dir.path(),
        &[
            "run",
            "--config",
            &theorem(),
            "--policy",
            "no",
            "--horizon",
            "500",
        ],
    );
    assert!(out.status.success());
    let energy = column(&String::from_utf8(out.stdout).unwrap(), "energy_total");
    assert_eq!(energy.len(), 50);
    assert!(energy.iter().all(|&e| e == 0.0));
}

#[test]
fn oracle_solves_the_hand_instance() {
    let dir = tempfile::tempdir().unwrap();
    let hand = scenarios().join("hand.json").display().to_string();
    let out = edge_sim(dir.path(), &["oracle", "--config", &hand]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "f_star 0.2"), "{text}");
    assert!(text.lines().any(|l| l == "y_star[0] 0 0.4"), "{text}");

    let out = edge_sim(dir.path(), &["oracle", "--config", &hand, "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["f_star"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    assert!((v["mu_star"][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn oracle_without_binding_resources_takes_every_positive_gain() {
    let dir = tempfile::tempdir().unwrap();
    let config = variant(dir.path(), 1e6, 1e6);
    let out = edge_sim(dir.path(), &["oracle", "--config", &config, "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();

    let s = load_scenario(&fs::read_to_string(&config).unwrap()).unwrap();
    let lambda = true_arrival_means(&s, None);
    let expected: f64 = lambda
        .iter()
        .flat_map(|row| row.iter().zip(s.grid.centers()))
        .filter(|(_, &w)| w > 0.0)
        .map(|(l, w)| l * w)
        .sum();
    assert!((v["f_star"].as_f64().unwrap() - expected).abs() < 1e-9 * expected);
}

#[test]
fn oracle_warns_on_zero_budget_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = variant(dir.path(), 0.0, 10.0);
    let out = edge_sim(dir.path(), &["oracle", "--config", &config, "--json"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Slater"));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["f_star"].as_f64().unwrap(), 0.0);
    assert!(v["dual_ceiling"].is_null());
}

#[test]
fn single_alpha_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--config", &theorem(), "--horizon", "1000"];
    let run = edge_sim(
        dir.path(),
        &[
            &["run"],
            &args[..],
            &["--alpha", "0.05", "--out", "run.csv"],
        ]
        .concat(),
    );
    assert!(run.status.success());
    let sweep = edge_sim(
        dir.path(),
        &[
            &["sweep"],
            &args[..],
            &["--alphas", "0.05", "--out-dir", "sw"],
        ]
        .concat(),
    );
    assert!(
        sweep.status.success(),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    assert_eq!(
        fs::read(dir.path().join("run.csv")).unwrap(),
        fs::read(dir.path().join("sw/alpha_0.05.csv")).unwrap()
    );
    let summary = fs::read_to_string(dir.path().join("sw/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.starts_with("alpha,terminal_gap,bound,"));
}

#[test]
fn sweep_writes_one_file_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_sim(
        dir.path(),
        &[
            "sweep",
            "--config",
            &theorem(),
            "--horizon",
            "300",
            "--alphas",
            "0.001,0.01,0.1",
            "--out-dir",
            "sw",
        ],
    );
    assert!(out.status.success());
    for a in ["0.001", "0.01", "0.1"] {
        assert!(dir.path().join(format!("sw/alpha_{a}.csv")).exists());
        assert!(dir
            .path()
            .join(format!("sw/alpha_{a}.csv.manifest.json"))
            .exists());
    }
    let summary = fs::read_to_string(dir.path().join("sw/summary.csv")).unwrap();
    assert_eq!(column(&summary, "alpha"), vec![0.001, 0.01, 0.1]);
}

#[test]
fn sweep_without_alphas_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_sim(
        dir.path(),
        &["sweep", "--config", &theorem(), "--out-dir", "sw"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_dedupes_and_rejects_unknown_names() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_sim(
        dir.path(),
        &[
            "compare",
            "--config",
            &theorem(),
            "--horizon",
            "300",
            "--policies",
            "onalgo,ato,rco,no,ato",
            "--out",
            "cmp.csv",
        ],
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("more than once"));
    let text = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    let policies: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(policies, vec!["onalgo", "ato", "rco", "no"]);

    let out = edge_sim(
        dir.path(),
        &[
            "compare",
            "--config",
            &theorem(),
            "--policies",
            "onalgo,greedy",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn mismatched_manifest_blocks_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "run",
        "--config",
        &theorem(),
        "--horizon",
        "50",
        "--out",
        "r.csv",
    ];
    assert!(edge_sim(dir.path(), &base).status.success());
    // same scenario: allowed
    assert!(edge_sim(dir.path(), &base).status.success());
    let other = [&base[..], &["--seed", "9"]].concat();
    let out = edge_sim(dir.path(), &other);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    let forced = [&other[..], &["--force"]].concat();
    assert!(edge_sim(dir.path(), &forced).status.success());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = edge_sim(dir.path(), &["run", "--config", "nope.json"]);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(dir.path().join("bad.json"), "{\"devices\": 3}").unwrap();
    let bad = edge_sim(dir.path(), &["run", "--config", "bad.json"]);
    assert_eq!(bad.status.code(), Some(2));
    let zero_alpha = edge_sim(dir.path(), &["run", "--config", &theorem(), "--alpha", "0"]);
    assert_eq!(zero_alpha.status.code(), Some(2));
    let policy = edge_sim(
        dir.path(),
        &["run", "--config", &theorem(), "--policy", "x"],
    );
    assert_eq!(policy.status.code(), Some(2));
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_edge-sim"))
            .current_dir(dir.path())
            .env("EDGE_SIM_THREADS", threads)
            .args(["oracle", "--config", &theorem()])
            .output()
            .unwrap()
    };
    assert_eq!(run("zero").status.code(), Some(2));
    assert_eq!(run("0").status.code(), Some(2));
    assert!(run("2").status.success());
}

#[test]
fn exported_trace_replays_through_a_csv_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = edge_sim(
        dir.path(),
        &[
            "trace-export",
            "--config",
            &theorem(),
            "--horizon",
            "200",
            "--out",
            "trace.csv",
        ],
    );
    assert!(out.status.success());
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,device,w,d_local,phi\n"));

    // a relative trace path resolves against the config's directory
    let mut doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(theorem()).unwrap()).unwrap();
    doc["gain_source"] = serde_json::json!({"kind": "csv", "path": "trace.csv"});
    doc["algorithm"]["horizon"] = 200.into();
    fs::write(dir.path().join("replay.json"), doc.to_string()).unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let config = dir.path().join("replay.json").display().to_string();

    let synthetic = edge_sim(
        dir.path(),
        &["run", "--config", &theorem(), "--horizon", "200"],
    );
    let replay = edge_sim(elsewhere.path(), &["run", "--config", &config]);
    assert!(
        replay.status.success(),
        "{}",
        String::from_utf8_lossy(&replay.stderr)
    );
    let a = String::from_utf8(synthetic.stdout).unwrap();
    let b = String::from_utf8(replay.stdout).unwrap();
    // same objects and costs, so the same decisions and spend
    assert_eq!(column(&a, "energy_total"), column(&b, "energy_total"));
    assert_eq!(column(&a, "offload_ratio"), column(&b, "offload_ratio"));
}
