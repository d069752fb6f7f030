use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use argfree_ffi::*;

fn last_error() -> String {
    let p = argfree_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn benchmark(alg: ArgfreeAlgorithm, k_max: usize) -> *mut ArgfreeExperiment {
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { argfree_experiment_benchmark_defaults(alg, k_max, 7, &mut exp) }, ArgfreeStatus::Ok);
    exp
}

#[test]
fn run_and_read_series() {
    let exp = benchmark(ArgfreeAlgorithm::Argfree, 50);
    let mut res = ptr::null_mut();
    unsafe {
        assert_eq!(argfree_experiment_run(exp, &mut res), ArgfreeStatus::Ok);
        let len = argfree_result_len(res);
        assert_eq!(len, 51);
        assert_eq!(argfree_result_runs(res), 10);
        let mut k = vec![0usize; len];
        assert_eq!(argfree_result_iterations(res, k.as_mut_ptr(), len), ArgfreeStatus::Ok);
        assert_eq!(k[50], 50);
        let (mut mean, mut std) = (vec![0.0; len], vec![0.0; len]);
        assert_eq!(
            argfree_result_series(res, ArgfreeSeries::RelativeLoss, mean.as_mut_ptr(), std.as_mut_ptr(), len),
            ArgfreeStatus::Ok
        );
        assert_eq!(mean[0], 1.0);
        assert!(mean[50] < 1.0);
        assert_eq!(
            argfree_result_series(res, ArgfreeSeries::GradNorm, mean.as_mut_ptr(), std.as_mut_ptr(), len - 1),
            ArgfreeStatus::InvalidArgument
        );
        assert!(last_error().contains("buffer"));
        argfree_result_free(res);
        argfree_experiment_free(exp);
    }
}

#[test]
fn json_round_trip_and_certificate() {
    let exp = benchmark(ArgfreeAlgorithm::ArgfreeEm, 10);
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(argfree_experiment_to_json(exp, &mut s), ArgfreeStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(argfree_experiment_from_json(s, &mut back), ArgfreeStatus::Ok);
        argfree_string_free(s);

        let mut cert = ptr::null_mut();
        assert_eq!(argfree_certify_json(back, &mut cert), ArgfreeStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(cert).to_str().unwrap()).unwrap();
        assert!(v["eta_numeric"].as_f64().unwrap() > 0.0);
        assert!(v["epsilon_em"].as_f64().is_some());
        argfree_string_free(cert);
        argfree_experiment_free(back);
        argfree_experiment_free(exp);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut exp = ptr::null_mut();
        assert_eq!(argfree_experiment_from_json(ptr::null(), &mut exp), ArgfreeStatus::NullPointer);
        assert!(exp.is_null());
        let bad = CString::new("{\"problem\": 3}").unwrap();
        assert_eq!(argfree_experiment_from_json(bad.as_ptr(), &mut exp), ArgfreeStatus::ConfigError);
        assert!(!last_error().is_empty());
        assert_eq!(argfree_experiment_run(ptr::null(), ptr::null_mut()), ArgfreeStatus::NullPointer);
        assert_eq!(argfree_result_len(ptr::null()), 0);
        argfree_experiment_free(ptr::null_mut());
        argfree_result_free(ptr::null_mut());
        argfree_solver_free(ptr::null_mut());
        argfree_string_free(ptr::null_mut());
    }
}

#[test]
fn divergence_is_numerical_abort() {
    let exp = benchmark(ArgfreeAlgorithm::ExactGradientBaseline, 200);
    unsafe {
        let mut s = ptr::null_mut();
        argfree_experiment_to_json(exp, &mut s);
        let mut v: serde_json::Value = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
        argfree_string_free(s);
        v["solver"]["alpha"] = 50.0.into();
        let text = CString::new(v.to_string()).unwrap();
        let mut bad = ptr::null_mut();
        assert_eq!(argfree_experiment_from_json(text.as_ptr(), &mut bad), ArgfreeStatus::Ok);
        let mut res = ptr::null_mut();
        assert_eq!(argfree_experiment_run(bad, &mut res), ArgfreeStatus::NumericalAbort);
        assert!(res.is_null());
        assert!(last_error().contains("seed"));
        argfree_experiment_free(bad);
        argfree_experiment_free(exp);
    }
}

#[test]
fn stepping_solver_matches_batch_run() {
    let base = benchmark(ArgfreeAlgorithm::Argfree, 30);
    unsafe {
        let mut s = ptr::null_mut();
        argfree_experiment_to_json(base, &mut s);
        let mut v: serde_json::Value = serde_json::from_str(CStr::from_ptr(s).to_str().unwrap()).unwrap();
        argfree_string_free(s);
        argfree_experiment_free(base);
        v["n_monte_carlo"] = 1.into();
        let text = CString::new(v.to_string()).unwrap();
        let mut exp = ptr::null_mut();
        assert_eq!(argfree_experiment_from_json(text.as_ptr(), &mut exp), ArgfreeStatus::Ok);

        let mut solver = ptr::null_mut();
        assert_eq!(argfree_solver_new(exp, 0, &mut solver), ArgfreeStatus::Ok);
        let n = argfree_solver_dim(solver);
        assert_eq!(n, 10);
        assert_eq!(argfree_solver_step(solver, 30), ArgfreeStatus::Ok);
        assert_eq!(argfree_solver_iteration(solver), 30);
        let mut x = vec![0.0; n];
        assert_eq!(argfree_solver_state(solver, x.as_mut_ptr(), n), ArgfreeStatus::Ok);
        assert_eq!(argfree_solver_state(solver, x.as_mut_ptr(), n + 1), ArgfreeStatus::InvalidArgument);
        let mut theta = [0.0; 5];
        assert_eq!(argfree_solver_theta(solver, theta.as_mut_ptr()), ArgfreeStatus::Ok);

        let mut res = ptr::null_mut();
        assert_eq!(argfree_experiment_run(exp, &mut res), ArgfreeStatus::Ok);
        let len = argfree_result_len(res);
        let (mut mean, mut std) = (vec![0.0; len], vec![0.0; len]);
        for (j, series) in [ArgfreeSeries::Theta1, ArgfreeSeries::Theta2, ArgfreeSeries::Theta5].into_iter().enumerate() {
            argfree_result_series(res, series, mean.as_mut_ptr(), std.as_mut_ptr(), len);
            assert_eq!(mean[len - 1], theta[[0, 1, 4][j]]);
        }
        argfree_result_free(res);
        argfree_solver_free(solver);
        argfree_experiment_free(exp);
    }
}

fn ffi_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_is_valid_c() {
    let header = ffi_dir().join("include/argfree.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["argfree_experiment_run", "argfree_certify_json", "argfree_last_error", "ARGFREE_STATUS_NUMERICAL_ABORT"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler; skipped syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn c_program_links_against_static_library() {
    // target/<profile>/deps/<test binary> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipped");
        return;
    }
    // The test harness links the rlib; refresh the static archive explicitly.
    let mut build = Command::new(std::env::var("CARGO").unwrap_or_else(|_| "cargo".into()));
    build.args(["build", "--quiet", "-p", "argfree-ffi", "--lib"]);
    if profile_dir.file_name().is_some_and(|n| n == "release") {
        build.arg("--release");
    }
    assert!(build.status().unwrap().success());
    let lib = profile_dir.join("libargfree_ffi.a");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "argfree.h"
int main(void) {
    ArgfreeExperiment *exp = NULL;
    ArgfreeResult *res = NULL;
    if (argfree_experiment_benchmark_defaults(ARGFREE_ALGORITHM_ARGFREE, 20, 1, &exp) != ARGFREE_STATUS_OK) return 10;
    if (argfree_experiment_run(exp, &res) != ARGFREE_STATUS_OK) return 11;
    size_t len = argfree_result_len(res);
    double mean[64], sd[64];
    if (len != 21) return 12;
    if (argfree_result_series(res, ARGFREE_SERIES_RELATIVE_LOSS, mean, sd, len) != ARGFREE_STATUS_OK) return 13;
    if (argfree_experiment_run(NULL, &res) != ARGFREE_STATUS_NULL_POINTER) return 14;
    if (argfree_last_error() == NULL) return 15;
    printf("%.3f\n", mean[0]);
    argfree_experiment_free(exp);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(ffi_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "1.000");
}
