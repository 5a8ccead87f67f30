use mfexec::cost::{evaluate_cost, pairwise_sum};
use mfexec::discrete::run_dp;
use mfexec::riccati::{crosscheck_full_matrix, full_matrix, solve_b};
use mfexec::simulate::{simulate_optimal, solve_mean_path, PathEnsemble, SimConfig};
use mfexec::wellposedness::{certify_psd, sym2_eigenvalues};
use mfexec::{select_lambda, CoefficientPaths, InitialLaw, ModelParams, RunConfig, StateMatrices, TimeGrid, VolSchedule};
use nalgebra::Matrix2;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (
        (0.0..0.5f64, 0.2..2.0f64, 0.2..2.0f64),
        (0.5..3.0f64, 0.0..0.9f64, prop_oneof![Just(0.0), 0.1..2.0f64]),
        (0.0..1.0f64, 0.5..2.0f64, -1.0..2.0f64, prop_oneof![Just(0.0), 0.01..0.2f64]),
    )
        .prop_filter_map("inadmissible", |((g1, g2, rho), (beta, frac, lambda), (sigma, t, x0, var))| {
            ModelParams {
                gamma1: g1,
                gamma2: g2,
                rho,
                alpha: frac * beta,
                beta,
                lambda,
                horizon: t,
                sigma: VolSchedule::constant(sigma),
                x0_mean: x0,
                x0_var: var,
                y0: 0.0,
                c0: 0.0,
            }
            .validate()
            .ok()
        })
}

fn certified() -> impl Strategy<Value = ModelParams> {
    params().prop_filter("not certified", |p| select_lambda(p).is_ok())
}

fn ensemble(p: &ModelParams, steps: usize, paths: usize, seed: u64) -> (CoefficientPaths, PathEnsemble) {
    let grid = TimeGrid::horizon(p.horizon, steps).unwrap();
    let coeffs = CoefficientPaths::solve(p, &TimeGrid::horizon(p.horizon, 4 * steps).unwrap()).unwrap();
    let law = InitialLaw::from_params(p);
    let mean = solve_mean_path(&coeffs, &law, &grid).unwrap();
    let e = simulate_optimal(&coeffs, mean, &law, &SimConfig::new(paths, seed)).unwrap();
    (coeffs, e)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn state_matrices_structure(p in params()) {
        let m = StateMatrices::new(&p);
        let nonzero = m.q.iter().filter(|v| **v != 0.0).count();
        prop_assert_eq!(nonzero, usize::from(p.lambda != 0.0));
        prop_assert_eq!(m.q[(0, 0)], p.lambda);
        let d = m.dvec(0.3 * p.horizon);
        prop_assert_eq!(d.iter().filter(|v| **v != 0.0).count(), usize::from(p.sigma.at(0.0) > 0.0));
        let quiet = ModelParams { alpha: 0.0, ..p }.validate().unwrap();
        let m = StateMatrices::new(&quiet);
        prop_assert!(m.h_bar.iter().all(|v| *v == 0.0));
        prop_assert!(m.g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_matrix_relations(r in prop::array::uniform3(-5.0..5.0f64), g2 in 0.1..3.0f64) {
        let m = full_matrix(&r, g2);
        prop_assert!((m[(0, 0)] - g2 * m[(1, 0)]).abs() <= 1e-12 * (1.0 + m[(0, 0)].abs()));
        prop_assert!((m[(0, 1)] - g2 * m[(1, 1)] - 0.5).abs() <= 1e-12 * (1.0 + m[(0, 1)].abs()));
        prop_assert!((m[(0, 2)] - g2 * m[(1, 2)]).abs() <= 1e-12 * (1.0 + m[(0, 2)].abs()));
        prop_assert_eq!(m, m.transpose());
    }

    #[test]
    fn eigenvalues_solve_characteristic_polynomial(a in -10.0..10.0f64, b in -10.0..10.0f64, d in -10.0..10.0f64) {
        let m = Matrix2::new(a, b, b, d);
        let [l0, l1] = sym2_eigenvalues(&m);
        let scale = 1.0 + a.abs() + b.abs() + d.abs();
        prop_assert!(l0 <= l1);
        prop_assert!((l0 + l1 - (a + d)).abs() <= 1e-12 * scale);
        prop_assert!((l0 * l1 - (a * d - b * b)).abs() <= 1e-12 * scale * scale);
    }

    #[test]
    fn certificate_is_idempotent_and_implies_solvability(p in certified()) {
        let c = select_lambda(&p).unwrap();
        prop_assert!(certify_psd(&p, c.lambda).passed);
        let b = solve_b(&p, &TimeGrid::horizon(p.horizon, 500).unwrap()).unwrap();
        prop_assert!(b.values.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn reduced_and_full_systems_agree(p in certified()) {
        let coeffs = CoefficientPaths::solve(&p, &TimeGrid::horizon(p.horizon, 2_000).unwrap()).unwrap();
        let r = crosscheck_full_matrix(&coeffs).unwrap();
        prop_assert!(r.sup() <= 1e-6, "sup {}", r.sup());
    }

    #[test]
    fn discrete_relations_hold(p in certified(), n in 2usize..60) {
        let dp = run_dp(&p, n).unwrap();
        prop_assert!(dp.max_relation_residual() <= 1e-12, "residual {}", dp.max_relation_residual());
    }

    #[test]
    fn every_path_liquidates_and_shares_child_flow(p in certified(), seed in any::<u64>()) {
        let (_, e) = ensemble(&p, 50, 16, seed);
        for path in &e.paths {
            prop_assert_eq!(path.terminal[0], 0.0);
            for k in 0..path.c.len() {
                prop_assert_eq!(path.c[k], e.mean.states[k][2]);
            }
        }
    }

    #[test]
    fn same_seed_same_ensemble(p in certified(), seed in any::<u64>()) {
        let (_, a) = ensemble(&p, 40, 8, seed);
        let (_, b) = ensemble(&p, 40, 8, seed);
        prop_assert_eq!(a.paths, b.paths);
    }

    #[test]
    fn terminal_atom_accounting(p in certified(), seed in any::<u64>()) {
        let (_, e) = ensemble(&p, 40, 8, seed);
        let ledger = evaluate_cost(&e).unwrap();
        for (c, path) in ledger.paths.iter().zip(&e.paths) {
            let b = path.terminal_block;
            let atom = path.y[path.y.len() - 1] * b + 0.5 * p.gamma2 * b * b;
            let removed = c.total() - c.total_without_terminal_block();
            prop_assert!((removed - atom).abs() <= 1e-12 * (1.0 + atom.abs()));
        }
    }

    #[test]
    fn noiseless_ensembles_have_zero_variance(p in certified(), seed in any::<u64>()) {
        let p = ModelParams { sigma: VolSchedule::constant(0.0), x0_var: 0.0, ..p }.validate().unwrap();
        let (_, e) = ensemble(&p, 40, 6, seed);
        let ledger = evaluate_cost(&e).unwrap();
        prop_assert_eq!(ledger.standard_error(), 0.0);
    }

    #[test]
    fn config_round_trip(p in params(), steps in 2usize..50_000, paths in 1usize..100_000, seed in any::<u64>()) {
        let cfg = RunConfig { params: p, grid_steps: steps, n_paths: paths, seed };
        prop_assert_eq!(RunConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
    }

    #[test]
    fn pairwise_sum_matches_naive(v in prop::collection::vec(-1e3..1e3f64, 0..300)) {
        let naive: f64 = v.iter().sum();
        let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>() + 1.0;
        prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-12 * scale);
    }
}
