//! Start-state invariance of optimal actions.
//!
//! The game policy is re-solved with the sweep beginning at every start state
//! and compared against the given policy. The naive optimiser minimises
//! `V(s)` subject to `W(s) ≤ w(s)` separately for each start `s`; its answer is
//! consistent for a pair `(s, t)` when the policy chosen for `s` is also
//! optimal and feasible from every state `t` it reaches.

use crate::error::Result;
use crate::eval::{brute_force_optimal, evaluate, StartOptimum};
use crate::mdp::{induced_kernel, ConstrainedMdp, Policy, PROBABILITY_TOLERANCE};
use crate::solver::{gauss_seidel_solve, SolverConfig, SweepOrder};

/// Tolerance for calling two mixed actions identical.
pub const ACTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GameStartCheck {
    pub start: usize,
    /// Policy from the solve whose sweep began at `start`; `None` if that
    /// solve failed or was infeasible.
    pub policy: Option<Policy>,
    pub max_deviation: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaivePairCheck {
    pub start: usize,
    /// A state reachable from `start` under the start's optimal policy.
    pub state: usize,
    /// Action played at `state` by the policy optimal for `start`.
    pub start_action: usize,
    /// Action played at `state` by the policy optimal for `state` itself.
    pub own_action: Option<usize>,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub game: Vec<GameStartCheck>,
    pub game_consistent: bool,
    pub naive_optima: Vec<StartOptimum>,
    pub naive: Vec<NaivePairCheck>,
    pub naive_consistent: bool,
}

pub fn bellman_consistency_check(
    mdp: &ConstrainedMdp,
    solver_policy: &Policy,
    config: &SolverConfig,
) -> Result<ConsistencyReport> {
    mdp.check_policy(solver_policy)?;
    let n = mdp.n_transient();

    let mut game = Vec::with_capacity(n);
    for start in 0..n {
        let cfg = SolverConfig {
            order: SweepOrder::StartingAt(start),
            ..config.clone()
        };
        let policy = gauss_seidel_solve(mdp, &cfg)
            .ok()
            .filter(|r| r.infeasible_states().next().is_none())
            .map(|r| r.policy);
        let max_deviation = policy
            .as_ref()
            .map_or(f64::INFINITY, |p| p.max_deviation(solver_policy));
        game.push(GameStartCheck {
            start,
            policy,
            max_deviation,
            consistent: max_deviation <= ACTION_TOLERANCE,
        });
    }
    let game_consistent = game.iter().all(|g| g.consistent);

    let naive_optima = brute_force_optimal(mdp)?;
    let mut naive = Vec::new();
    for opt in &naive_optima {
        let Some(best) = &opt.best else { continue };
        let policy = Policy::deterministic(&best.actions, mdp.n_actions())?;
        let bundle = evaluate(mdp, &policy)?;
        for state in reachable(mdp, &policy, opt.start)? {
            if state == opt.start {
                continue;
            }
            let own = naive_optima[state].best.as_ref();
            let consistent = own.is_some_and(|o| {
                let tol = PROBABILITY_TOLERANCE.max(1e-9 * o.value.abs().max(1.0));
                bundle.value[state] <= o.value + tol
                    && bundle.safety[state] <= mdp.threshold(state) + PROBABILITY_TOLERANCE
            });
            naive.push(NaivePairCheck {
                start: opt.start,
                state,
                start_action: best.actions[state],
                own_action: own.map(|o| o.actions[state]),
                consistent,
            });
        }
    }
    let naive_consistent = naive.iter().all(|p| p.consistent);

    Ok(ConsistencyReport {
        game,
        game_consistent,
        naive_optima,
        naive,
        naive_consistent,
    })
}

/// Transient states reachable from `start` with positive probability.
fn reachable(mdp: &ConstrainedMdp, policy: &Policy, start: usize) -> Result<Vec<usize>> {
    let kernel = induced_kernel(mdp, policy)?;
    let n = mdp.n_transient();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if kernel.transition[(i, j)] > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    Ok((0..n).filter(|&j| seen[j]).collect())
}
