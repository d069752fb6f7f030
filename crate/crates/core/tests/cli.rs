use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use argfree::graph::WeightedDigraph;
use argfree::harness::{self, AggregatedStats, ExperimentConfig, OutputFormat};
use argfree::solver::{Algorithm, RunTrace};

fn argfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_argfree")).args(args).output().unwrap()
}

fn write_config(dir: &Path, alg: Algorithm, k_max: usize, out: &str) -> String {
    let mut cfg = ExperimentConfig::benchmark_defaults(alg, k_max, 5);
    cfg.n_monte_carlo = 4;
    cfg.solver.record_every = 10;
    cfg.output_dir = Some(dir.join(out));
    let path = dir.join(format!("{out}.json"));
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_traces_and_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), Algorithm::Argfree, 200, "a");
    let out = argfree(&["run", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("a");
    for r in 0..4 {
        assert!(run_dir.join(format!("trace_argfree_{r:03}.csv")).exists());
    }
    assert!(run_dir.join("stats_argfree.csv").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("metadata_argfree.json")).unwrap()).unwrap();
    assert_eq!(meta["seeds"], serde_json::json!([5, 6, 7, 8]));
}

#[test]
fn persisted_statistics_match_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), Algorithm::Argfree, 100, "s");
    let cfg = ExperimentConfig::read(&cfg_path).unwrap();
    let res = harness::run_experiment(&cfg).unwrap();
    let run_dir = dir.path().join("s");
    let f_star = res.traces[0].f_star;
    let traces: Vec<RunTrace> = (0..4)
        .map(|r| {
            let table =
                harness::trace_from_csv(&fs::read_to_string(run_dir.join(format!("trace_argfree_{r:03}.csv"))).unwrap()).unwrap();
            RunTrace { algorithm: Algorithm::Argfree, local_dims: table.local_dims, f_star, rows: table.rows }
        })
        .collect();
    let again = AggregatedStats::from_traces(&traces).unwrap();
    assert_eq!(again, res.stats);
    assert_eq!(again.to_csv().unwrap(), fs::read_to_string(run_dir.join("stats_argfree.csv")).unwrap());

    // population standard deviation, by hand for one row
    let k = 5;
    let vals: Vec<f64> = traces.iter().map(|t| (t.rows[k].loss - f_star.unwrap()) / (t.rows[0].loss - f_star.unwrap())).collect();
    let m = vals.iter().sum::<f64>() / 4.0;
    let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert!((res.stats.relative_loss.mean[k] - m).abs() < 1e-15);
    assert!((res.stats.relative_loss.std[k] - sd).abs() < 1e-15);
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut names = Vec::new();
    for out in ["x", "y"] {
        let cfg = write_config(dir.path(), Algorithm::ArgfreeEm, 150, out);
        assert!(argfree(&["run", &cfg]).status.success());
        names.push(dir.path().join(out));
    }
    for file in ["trace_argfree_em_000.csv", "trace_argfree_em_003.csv", "stats_argfree_em.csv"] {
        assert_eq!(fs::read(names[0].join(file)).unwrap(), fs::read(names[1].join(file)).unwrap(), "{file}");
    }
}

#[test]
fn json_output_format() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::benchmark_defaults(Algorithm::ExactGradientBaseline, 20, 1);
    cfg.n_monte_carlo = 2;
    cfg.output_dir = Some(dir.path().to_path_buf());
    cfg.output_format = OutputFormat::Json;
    let res = harness::run_experiment(&cfg).unwrap();
    let back = harness::trace_from_json(&fs::read_to_string(dir.path().join("trace_exact_gradient_baseline_001.json")).unwrap())
        .unwrap();
    assert_eq!(back, res.traces[1]);
    assert!(dir.path().join("stats_exact_gradient_baseline.json").exists());
}

#[test]
fn certify_prints_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), Algorithm::Argfree, 10, "c");
    let out = argfree(&["certify", &cfg]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["feasible"], serde_json::json!(false));
    assert_eq!(v["m"].as_array().unwrap().len(), 5);
    assert!(v["eta_numeric"].as_f64().unwrap() > 0.0);
}

#[test]
fn graph_command_and_graph_file_override() {
    let dir = tempfile::tempdir().unwrap();
    let gpath = dir.path().join("g.json");
    let out = argfree(&["graph", "--n", "5", "--p", "0.6", "--seed", "3", "--out", gpath.to_str().unwrap()]);
    assert!(out.status.success());
    let g = WeightedDigraph::read_json(&gpath).unwrap();
    assert_eq!(g.n_agents(), 5);

    let cfg = write_config(dir.path(), Algorithm::Argfree, 10, "cfg");
    let out = argfree(&["certify", &cfg, "--graph-file", gpath.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rho = argfree::graph::validate(&g).rho_a;
    assert!((v["constants"]["rho_a"].as_f64().unwrap() - rho).abs() < 1e-12);
}

#[test]
fn sweep_prints_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), Algorithm::Argfree, 50, "w");
    let out = argfree(&["sweep", &cfg, "--param", "momentum_kappa", "--values", "0,0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "momentum_kappa,terminal_error,terminal_relative_loss");
    assert_eq!(lines.len(), 3);
    assert!(dir.path().join("w").join("sweep_momentum_kappa_0.5").join("stats_argfree_em.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{").unwrap();
    assert_eq!(argfree(&["run", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(argfree(&["run", "/nonexistent/config.json"]).status.code(), Some(1));

    let mut cfg = ExperimentConfig::benchmark_defaults(Algorithm::ExactGradientBaseline, 500, 1);
    cfg.solver.alpha = 50.0;
    let path = dir.path().join("diverge.json");
    fs::write(&path, cfg.to_json().unwrap()).unwrap();
    let out = argfree(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}
