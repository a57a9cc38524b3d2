#![allow(clippy::needless_range_loop)]

mod common;

use cmdp::eval::{barrier_lagrangian, SLACK_FLOOR};
use cmdp::horizon::barrier_cost_bounds;
use cmdp::io::builtin::counterexample;
use cmdp::learner::{learn, learn_for, rng_from_seed, Environment, LearnConfig, Transition};
use cmdp::mdp::{Policy, Successor};
use proptest::prelude::*;

use common::{max_continuation, random_instance, rng, RandomShape};

#[test]
fn monte_carlo_matches_the_kernel() {
    let mdp = counterexample();
    let env = Environment::new(&mdp).unwrap();
    let mut rng = rng_from_seed(99);
    let samples = 100_000;
    let to_j = (0..samples)
        .filter(|_| {
            matches!(
                env.step(0, 0, &mut rng).unwrap(),
                Transition {
                    next: Successor::Transient(1),
                    ..
                }
            )
        })
        .count();
    let freq = to_j as f64 / samples as f64;
    assert!((freq - 0.5).abs() <= 0.01, "{freq}");
}

#[test]
fn learned_value_at_j_is_close_for_many_seeds() {
    let mdp = counterexample();
    let policy = Policy::deterministic(&[1, 1], 2).unwrap();
    let exact = barrier_lagrangian(&mdp, &policy, 100.0).unwrap().value[1];
    for seed in 0..20 {
        let config = LearnConfig {
            l: 100.0,
            exploration_floor: 0.1,
            seed,
            max_steps: 100_000,
            ..LearnConfig::default()
        };
        let out = learn(&mdp, &config).unwrap();
        assert_eq!(out.state.greedy_action(1), 1, "seed {seed}");
        let rel = (out.state.lbar(1) - exact).abs() / exact;
        assert!(rel <= 0.05, "seed {seed}: {} vs {exact}", out.state.lbar(1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn q_values_stay_in_range(seed in any::<u64>(), l in 1.0f64..200.0) {
        let mdp = random_instance(&mut rng(seed), &RandomShape::default());
        let gamma = max_continuation(&mdp);
        let (c_max, _) = barrier_cost_bounds(&mdp, SLACK_FLOOR);
        let phi_clamp = -SLACK_FLOOR.ln();
        let upper = (c_max + phi_clamp / l) / (1.0 - gamma) + 1.0;
        for steps in [10, 100, 1_000, 3_000] {
            let config = LearnConfig { l, seed, max_steps: steps, ..LearnConfig::default() };
            let out = learn_for(&mdp, &config).unwrap();
            for i in 0..mdp.n_transient() {
                for &q in out.state.q_row(i) {
                    prop_assert!((0.0..=upper).contains(&q), "{q} outside [0, {upper}]");
                }
            }
        }
    }

    #[test]
    fn counts_rates_and_policy_rows(seed in any::<u64>()) {
        let mdp = random_instance(&mut rng(seed), &RandomShape::default());
        let config = LearnConfig { seed, max_steps: 2_000, ..LearnConfig::default() };
        let out = learn_for(&mdp, &config).unwrap();
        let s = &out.state;
        let mut visits = vec![0u64; mdp.n_transient()];
        for row in &out.trace.rows {
            visits[row.state] += 1;
        }
        for i in 0..mdp.n_transient() {
            prop_assert_eq!(visits[i], s.visits(i));
            let total: u64 = (0..mdp.n_actions()).map(|a| s.greedy_count(i, a)).sum();
            prop_assert_eq!(total, s.visits(i));
            if s.visited(i) {
                prop_assert_eq!(s.learning_rate(i), Some(1.0 / visits[i] as f64));
                let sum: f64 = s.policy_row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                let lbar = s.q_row(i).iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert_eq!(s.lbar(i), lbar);
            }
        }
    }

    #[test]
    fn runs_are_reproducible(seed in any::<u64>()) {
        let mdp = random_instance(&mut rng(seed), &RandomShape::default());
        let config = LearnConfig { seed, max_steps: 1_000, ..LearnConfig::default() };
        prop_assert_eq!(learn_for(&mdp, &config).unwrap(), learn_for(&mdp, &config).unwrap());
    }
}
