mod common;

use cmdp::consistency::bellman_consistency_check;
use cmdp::game::{stage_val, StageGame, StageOptions, StageStatus};
use cmdp::mdp::ConstrainedMdp;
use cmdp::solver::{extract_policy, gauss_seidel_solve, gauss_seidel_sweep, SolveOutcome, SolverConfig, SweepOrder};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::Rng;

use common::{dual_oracle, lp_oracle, max_continuation, random_instance, rng, stage_payoff, RandomShape};

fn stage() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|n| (vec(-1.0f64..=1.0, n), vec(-1.0f64..=1.0, n)))
}

fn instance(seed: u64) -> ConstrainedMdp {
    random_instance(&mut rng(seed), &RandomShape::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn value_matches_primal_and_dual_programs((g, h) in stage()) {
        let sol = stage_val(&StageGame::new(g.clone(), h.clone()).unwrap());
        match (lp_oracle(&g, &h), dual_oracle(&g, &h)) {
            (Some(primal), Some(dual)) => {
                prop_assert!((sol.value - primal).abs() <= 1e-9);
                prop_assert!((sol.value - dual).abs() <= 1e-9);
                prop_assert!(sol.status != StageStatus::Infeasible);
                // the reported mixed action attains the value and is feasible
                let pg: f64 = sol.mixed_action.iter().zip(&g).map(|(p, g)| p * g).sum();
                let ph: f64 = sol.mixed_action.iter().zip(&h).map(|(p, h)| p * h).sum();
                prop_assert!((pg - sol.value).abs() <= 1e-9);
                prop_assert!(ph <= 1e-12);
                prop_assert!(sol.mixed_action.iter().filter(|p| **p > 0.0).count() <= 2);
                // the multiplier attains the dual value
                prop_assert!((game_dual(&g, &h, sol.multiplier) - sol.value).abs() <= 1e-9 * sol.multiplier.max(1.0));
                prop_assert_eq!(sol.multiplier == 0.0, sol.status == StageStatus::Interior);
            }
            (None, None) => {
                prop_assert!(h.iter().all(|x| *x > 0.0));
                prop_assert_eq!(sol.status, StageStatus::Infeasible);
                prop_assert_eq!(sol.value, f64::INFINITY);
            }
            other => prop_assert!(false, "oracles disagree: {other:?}"),
        }
    }

    #[test]
    fn value_is_monotone_in_payoff((g, h) in stage(), bumps in vec(0.0f64..1.0, 6)) {
        prop_assume!(h.iter().any(|x| *x <= 0.0));
        let raised: Vec<f64> = g.iter().zip(&bumps).map(|(g, b)| g + b).collect();
        let low = stage_val(&StageGame::new(g, h.clone()).unwrap()).value;
        let high = stage_val(&StageGame::new(raised, h).unwrap()).value;
        prop_assert!(low <= high + 1e-12);
    }

    #[test]
    fn shifting_payoffs_shifts_the_value((g, h) in stage(), shift in -10.0f64..10.0) {
        prop_assume!(h.iter().any(|x| *x <= 0.0));
        let base = stage_val(&StageGame::new(g.clone(), h.clone()).unwrap());
        let shifted = stage_val(&StageGame::new(g.iter().map(|x| x + shift).collect(), h).unwrap());
        prop_assert!((shifted.value - base.value - shift).abs() <= 1e-9);
        for (a, b) in base.mixed_action.iter().zip(&shifted.mixed_action) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        prop_assert!((base.multiplier - shifted.multiplier).abs() <= 1e-9 * base.multiplier.max(1.0));
    }
}

fn game_dual(g: &[f64], h: &[f64], lambda: f64) -> f64 {
    g.iter()
        .zip(h)
        .map(|(g, h)| g + lambda * h)
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweep_contracts_with_the_continuation_modulus(seed in any::<u64>()) {
        let mdp = instance(seed);
        let gamma = max_continuation(&mdp);
        let mut r = rng(seed.rotate_left(17));
        let n = mdp.n_transient();
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..50.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0.0..50.0)).collect();
        let before = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for order in [SweepOrder::Declaration, SweepOrder::Reverse] {
            let order = order.resolve(n).unwrap();
            let (mut xs, mut ys) = (x.clone(), y.clone());
            gauss_seidel_sweep(&mdp, &mut xs, &order, &StageOptions::default()).unwrap();
            gauss_seidel_sweep(&mdp, &mut ys, &order, &StageOptions::default()).unwrap();
            let after = xs.iter().zip(&ys).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(after <= gamma * before + 1e-9);
        }
        // the synchronous map as well
        let jx: Vec<f64> = (0..n).map(|i| { let (g, h) = stage_payoff(&mdp, i, &x); lp_oracle(&g, &h).unwrap() }).collect();
        let jy: Vec<f64> = (0..n).map(|i| { let (g, h) = stage_payoff(&mdp, i, &y); lp_oracle(&g, &h).unwrap() }).collect();
        let after = jx.iter().zip(&jy).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(after <= gamma * before + 1e-9);
    }

    #[test]
    fn solution_is_a_fixed_point_in_any_order(seed in any::<u64>()) {
        let mdp = instance(seed);
        let n = mdp.n_transient();
        let forward = gauss_seidel_solve(&mdp, &SolverConfig::default()).unwrap();
        let backward = gauss_seidel_solve(&mdp, &SolverConfig { order: SweepOrder::Reverse, ..SolverConfig::default() }).unwrap();
        prop_assert_eq!(forward.outcome, SolveOutcome::Converged);
        let gamma = max_continuation(&mdp);
        let tol = 10.0 * 1e-8 / (1.0 - gamma);
        for i in 0..n {
            prop_assert!((forward.values[i] - backward.values[i]).abs() <= tol);
            let (g, h) = stage_payoff(&mdp, i, &forward.values);
            prop_assert!((lp_oracle(&g, &h).unwrap() - forward.values[i]).abs() <= tol);
        }
    }

    #[test]
    fn interior_states_keep_one_step_slack(seed in any::<u64>()) {
        let mdp = instance(seed);
        let report = gauss_seidel_solve(&mdp, &SolverConfig::default()).unwrap();
        for i in 0..mdp.n_transient() {
            prop_assert!(report.one_step_slack[i] <= 1e-9);
            if report.status[i] == StageStatus::Interior {
                prop_assert_eq!(report.multipliers[i], 0.0);
            }
        }
    }
}

#[test]
fn game_policy_is_start_independent_on_random_instances() {
    for seed in 0..20 {
        let shape = RandomShape {
            max_states: 4,
            max_actions: 3,
            ..RandomShape::default()
        };
        let mdp = random_instance(&mut rng(seed), &shape);
        let config = SolverConfig::default();
        let policy = extract_policy(&gauss_seidel_solve(&mdp, &config).unwrap()).unwrap();
        let report = bellman_consistency_check(&mdp, &policy, &config).unwrap();
        assert!(report.game_consistent, "seed {seed}: {:?}", report.game);
    }
}
