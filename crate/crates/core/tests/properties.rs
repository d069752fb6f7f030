use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use argfree::certify::{self, EpsilonForm, TheoryConstants};
use argfree::graph::{self, WeightedDigraph};
use argfree::harness;
use argfree::linalg;
use argfree::problem::{formation_problem, FormationInstance};
use argfree::smoothing::{forward_difference_oracle, moment_bound, stationary_covariance};
use argfree::solver::{Algorithm, RunTrace, TraceRow};

fn connected_adjacency() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..8).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let mut adj = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in (i + 1)..n {
                    // a path keeps every sample connected
                    if j == i + 1 || bits[i * n + j] {
                        adj[(i, j)] = 1.0;
                        adj[(j, i)] = 1.0;
                    }
                }
            }
            adj
        })
    })
}

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-10.0f64..10.0, len)
}

fn constants() -> impl Strategy<Value = TheoryConstants> {
    (1usize..6, 1usize..3, 0.0f64..0.95, 0.0f64..2.0, 1e-3f64..1.0, 0.05f64..1.0, 0.01f64..2.0, 1e-3f64..1.0).prop_map(
        |(n_agents, d, rho_a, norm, l1, mu_frac, l_phi, l0_hat)| TheoryConstants {
            mu: l1 * mu_frac,
            l0: 1.0,
            l1,
            l_phi,
            l0_hat,
            n: n_agents * d,
            n_agents,
            d,
            rho_a,
            norm_a_minus_i: norm,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metropolis_weights_are_valid_mixing(adj in connected_adjacency()) {
        let g = WeightedDigraph::from_weights(graph::metropolis_weights(&adj).unwrap()).unwrap();
        let report = graph::validate(&g);
        prop_assert!(report.is_valid());
        let n = g.n_agents();
        let a = g.weights();
        let j = DMatrix::from_element(n, n, 1.0 / n as f64);
        prop_assert!((a * &j - &j).amax() < 1e-12);
        prop_assert!((&j * a - &j).amax() < 1e-12);
    }

    #[test]
    fn mixing_contracts_disagreement(adj in connected_adjacency(), seed in any::<u64>()) {
        let g = WeightedDigraph::from_weights(graph::metropolis_weights(&adj).unwrap()).unwrap();
        let rho = graph::validate(&g).rho_a;
        let n = g.n_agents();
        let v = DVector::from_fn(n, |i, _| ((seed.wrapping_mul(i as u64 + 1) % 1000) as f64) / 100.0 - 5.0);
        let mixed = g.mix(&v, 1);
        prop_assert!((mixed.mean() - v.mean()).abs() < 1e-12);
        let before = graph::consensus_gap(v.as_slice(), n).unwrap();
        let after = graph::consensus_gap(mixed.as_slice(), n).unwrap();
        prop_assert!(after <= rho * before + 1e-10);
    }

    #[test]
    fn linear_functions_have_exact_difference_quotients(c in vector(4), u in vector(4), x in vector(4), delta in 1e-3f64..10.0) {
        let c = DVector::from_vec(c);
        let u = DVector::from_vec(u);
        let x = DVector::from_vec(x);
        let g = forward_difference_oracle(|z| c.dot(z), &x, &u, delta, &u).unwrap();
        let expected = &u * c.dot(&u);
        prop_assert!((g - &expected).amax() <= 1e-6 * (1.0 + expected.amax()));
    }

    #[test]
    fn formation_loss_matches_aggregate_form_and_gradient(seed in any::<u64>(), x in vector(6)) {
        let inst = FormationInstance::random(3, 2, 2.0, 0.0, 10.0, seed);
        let mut p = formation_problem(&inst.targets, &inst.gammas).unwrap();
        let sigma = p.aggregate(&x).unwrap();
        let direct: f64 = (0..3)
            .map(|i| {
                let xi = &x[2 * i..2 * i + 2];
                let r = &inst.targets[i];
                let target = (xi[0] - r[0]).powi(2) + (xi[1] - r[1]).powi(2);
                let cohesion = (xi[0] - sigma[0]).powi(2) + (xi[1] - sigma[1]).powi(2);
                inst.gammas[i] / 2.0 * target + cohesion / 2.0
            })
            .sum::<f64>()
            / 3.0;
        prop_assert!((p.exact_loss(&x).unwrap() - direct).abs() < 1e-10 * (1.0 + direct.abs()));
        let grad = p.exact_gradient(&x).unwrap();
        let h = 1e-5;
        for k in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (p.exact_loss(&xp).unwrap() - p.exact_loss(&xm).unwrap()) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() < 1e-6 * (1.0 + grad[k].abs()));
        }
    }

    #[test]
    fn row_sums_bound_spectral_radius(c in constants(), alpha_frac in 1e-3f64..1.0, delta in 1e-3f64..10.0) {
        let alpha = alpha_frac / (2.0 * (c.n as f64 + 4.0) * c.l1);
        let m = certify::assemble_m(alpha, delta, &c);
        let eta = certify::eta_estimates(alpha, delta, &c);
        let rows: Vec<f64> = m.row_iter().map(|r| r.sum()).collect();
        prop_assert!((rows[0] - eta.eta1_star).abs() < 1e-10 * (1.0 + eta.eta1_star));
        prop_assert!((rows[1] - eta.eta2_star).abs() < 1e-10 * (1.0 + eta.eta2_star));
        prop_assert!((rows[3] - eta.eta3_star).abs() < 1e-10 * (1.0 + eta.eta3_star));
        let rho = certify::spectral_radius(&m).unwrap();
        prop_assert!(rho <= eta.max() * (1.0 + 1e-10) + 1e-10);
        prop_assert!(m.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn accuracy_bound_is_linear_in_delta(c in constants(), alpha in 1e-5f64..1e-2, delta in 1e-4f64..1.0, scale in 0.1f64..10.0) {
        let e = 2.0 * c.n as f64;
        for form in [EpsilonForm::Squared, EpsilonForm::Unsquared] {
            let a = certify::epsilon_bound(alpha, delta, &c, e, form).unwrap();
            let b = certify::epsilon_bound(alpha, delta * scale, &c, e, form).unwrap();
            prop_assert!((b - scale * a).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn stepsize_bounds_grow_with_delta(c in constants(), delta in 1e-4f64..1.0) {
        let small = certify::stepsize_bounds(&c, delta);
        let large = certify::stepsize_bounds(&c, 2.0 * delta);
        prop_assert!(large.alpha1_star > small.alpha1_star);
        prop_assert_eq!(large.alpha_max_centralized, small.alpha_max_centralized);
        let eta_lo = certify::eta_estimates(1e-4, delta, &c);
        let eta_hi = certify::eta_estimates(2e-4, delta, &c);
        prop_assert!(eta_hi.eta2_star >= eta_lo.eta2_star);
    }

    #[test]
    fn lyapunov_solution_is_a_fixed_point(diag in proptest::collection::vec(-0.95f64..0.95, 3), off in proptest::collection::vec(-0.3f64..0.3, 3), s in 0.05f64..2.0) {
        let mut b = DMatrix::from_diagonal(&DVector::from_vec(diag));
        b[(0, 1)] = off[0];
        b[(0, 2)] = off[1];
        b[(1, 2)] = off[2];
        let sv = DMatrix::identity(3, 3) * s;
        let sigma = stationary_covariance(&b, &sv).unwrap();
        let residual = &b * &sigma * b.transpose() + &sv - &sigma;
        prop_assert!(residual.amax() <= 1e-10 * sigma.amax());
        prop_assert!(linalg::min_symmetric_eigenvalue(&sigma) > 0.0);
    }

    #[test]
    fn moment_bound_increases_with_dimension(p in 0u32..8, n in 1usize..50) {
        prop_assert!(moment_bound(p, n + 1) >= moment_bound(p, n));
    }

    #[test]
    fn csv_trace_round_trip(rows in proptest::collection::vec((proptest::collection::vec(-1e6f64..1e6, 4), any::<bool>(), 0u64..1000), 1..6)) {
        let trace = RunTrace {
            algorithm: Algorithm::Argfree,
            local_dims: vec![1, 3],
            f_star: Some(0.5),
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(k, (x, missing, evals))| TraceRow {
                    k,
                    loss: x[0] * x[1],
                    grad_norm: if missing { f64::NAN } else { x[2].abs() },
                    theta: [x[0].abs(), x[1].abs(), f64::NAN, x[3].abs(), 1.0 / 3.0],
                    x,
                    loss_evals: evals,
                    agg_evals: 2 * evals,
                    elapsed: 0.0,
                })
                .collect(),
        };
        let table = harness::trace_from_csv(&harness::trace_to_csv(&trace).unwrap()).unwrap();
        prop_assert_eq!(table.local_dims, trace.local_dims.clone());
        prop_assert_eq!(table.rows, trace.rows.clone());
        prop_assert_eq!(harness::trace_from_json(&harness::trace_to_json(&trace).unwrap()).unwrap(), trace);
    }
}
