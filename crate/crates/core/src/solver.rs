//! Asynchronous Lagrangian value iteration.
//!
//! Starting from `L = 0`, each sweep visits the transient states in a fixed
//! order and replaces `L(i)` by the value of the stage game at `i`, built
//! from the current vector. States already visited in the sweep therefore
//! contribute their new value and the rest (including `i`) their old one.

use crate::error::{Error, Result};
use crate::game::{
    stage_val_with, StageGame, StageGameSolution, StageOptions, StageStatus, TieBreak, DEFAULT_LAMBDA_CAP,
};
use crate::mdp::{ConstrainedMdp, Policy};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Sweep cap used when no geometric contraction estimate is available.
pub const FALLBACK_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SweepOrder {
    /// Declaration order `0, 1, ..., N-1`.
    #[default]
    Declaration,
    Reverse,
    /// Declaration order rotated to begin at the given state.
    StartingAt(usize),
    /// Any permutation of `0..N`.
    Custom(Vec<usize>),
}

impl SweepOrder {
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        let order: Vec<usize> = match self {
            SweepOrder::Declaration => (0..n).collect(),
            SweepOrder::Reverse => (0..n).rev().collect(),
            SweepOrder::StartingAt(s) => {
                if *s >= n {
                    return Err(Error::Structural(format!("start state {s} out of range")));
                }
                (0..n).map(|k| (s + k) % n).collect()
            }
            SweepOrder::Custom(order) => order.clone(),
        };
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Structural(format!(
                "sweep order {order:?} is not a permutation of 0..{n}"
            )));
        }
        Ok(order)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub lambda_cap: f64,
    /// `None` picks `10 · ceil(ln ε / ln γ)` from the model's largest
    /// continuation probability.
    pub max_sweeps: Option<usize>,
    pub order: SweepOrder,
    pub tie_break: TieBreak,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            lambda_cap: DEFAULT_LAMBDA_CAP,
            max_sweeps: None,
            order: SweepOrder::Declaration,
            tie_break: TieBreak::default(),
        }
    }
}

impl SolverConfig {
    fn stage_options(&self) -> StageOptions {
        StageOptions {
            lambda_cap: self.lambda_cap,
            tie_break: self.tie_break,
        }
    }
}

pub fn default_max_sweeps(mdp: &ConstrainedMdp, epsilon: f64) -> usize {
    let gamma = mdp.max_continuation();
    if gamma >= 1.0 - 1e-12 {
        return FALLBACK_MAX_SWEEPS;
    }
    if gamma <= 0.0 {
        return 10;
    }
    let estimate = (epsilon.ln() / gamma.ln()).ceil();
    (10.0 * estimate).clamp(10.0, FALLBACK_MAX_SWEEPS as f64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveOutcome {
    Converged,
    /// Some stage game had no action with nonpositive slack.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Lagrangian value per transient state.
    pub values: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Mixed actions from the final sweep.
    pub policy: Policy,
    pub status: Vec<StageStatus>,
    /// One-step expected slack `Σ_a π(a|i) (k(i,a) - w(i))` of the final mixed action.
    pub one_step_slack: Vec<f64>,
    pub sweeps: usize,
    /// Sup-norm change of each sweep.
    pub residual_history: Vec<f64>,
    pub outcome: SolveOutcome,
    pub epsilon: f64,
}

impl SolveReport {
    pub fn infeasible_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == StageStatus::Infeasible)
            .map(|(i, _)| i)
    }
}

/// One in-place sweep over `order`. Returns the stage solutions indexed by
/// state and the sup-norm change.
pub fn gauss_seidel_sweep(
    mdp: &ConstrainedMdp,
    values: &mut [f64],
    order: &[usize],
    opts: &StageOptions,
) -> Result<(Vec<Option<StageGameSolution>>, f64)> {
    let mut solutions = vec![None; mdp.n_transient()];
    let mut delta: f64 = 0.0;
    for &i in order {
        let game = StageGame::at_state(mdp, i, values)?;
        let sol = stage_val_with(&game, opts);
        let change = if sol.value == values[i] {
            0.0
        } else {
            (sol.value - values[i]).abs()
        };
        delta = delta.max(change);
        values[i] = sol.value;
        solutions[i] = Some(sol);
    }
    Ok((solutions, delta))
}

pub fn gauss_seidel_solve(mdp: &ConstrainedMdp, config: &SolverConfig) -> Result<SolveReport> {
    if !(config.epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon = {} must be positive", config.epsilon)));
    }
    if !(config.lambda_cap > 0.0) {
        return Err(Error::Domain(format!(
            "lambda cap = {} must be positive",
            config.lambda_cap
        )));
    }
    let n = mdp.n_transient();
    let na = mdp.n_actions();
    if na == 0 {
        return Err(Error::Structural("model has no actions".into()));
    }
    let order = config.order.resolve(n)?;
    let max_sweeps = config
        .max_sweeps
        .unwrap_or_else(|| default_max_sweeps(mdp, config.epsilon));
    let opts = config.stage_options();

    let mut values = vec![0.0; n];
    let mut history = Vec::new();
    let mut last: Vec<Option<StageGameSolution>> = vec![None; n];
    let mut outcome = None;
    for _ in 0..max_sweeps {
        let (solutions, delta) = gauss_seidel_sweep(mdp, &mut values, &order, &opts)?;
        history.push(delta);
        last = solutions;
        if last.iter().flatten().any(|s| s.status == StageStatus::Infeasible) {
            outcome = Some(SolveOutcome::Infeasible);
            break;
        }
        if delta < config.epsilon {
            outcome = Some(SolveOutcome::Converged);
            break;
        }
    }
    let Some(outcome) = outcome else {
        return Err(Error::NotConverged {
            sweeps: history.len(),
            last_delta: history.last().copied().unwrap_or(f64::NAN),
            residual_history: history,
        });
    };

    let mut rows = Vec::with_capacity(n);
    let mut multipliers = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    let mut one_step_slack = Vec::with_capacity(n);
    for (i, sol) in last.into_iter().enumerate() {
        let sol = sol.expect("every state is visited in a sweep");
        let slack = (0..na)
            .map(|a| sol.mixed_action[a] * (mdp.safety_cost(i, a) - mdp.threshold(i)))
            .sum();
        one_step_slack.push(slack);
        multipliers.push(sol.multiplier);
        status.push(sol.status);
        rows.push(sol.mixed_action);
    }
    Ok(SolveReport {
        values,
        multipliers,
        policy: Policy::new(rows)?,
        status,
        one_step_slack,
        sweeps: history.len(),
        residual_history: history,
        outcome,
        epsilon: config.epsilon,
    })
}

/// Mixed actions of the final sweep; fails when some state was infeasible.
pub fn extract_policy(report: &SolveReport) -> Result<Policy> {
    if let Some(i) = report.infeasible_states().next() {
        return Err(Error::Infeasible(format!("state {i} has no feasible action")));
    }
    Ok(report.policy.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::builtin::counterexample;
    use crate::mdp::MdpBuilder;

    #[test]
    fn counterexample_resolves_to_b_everywhere() {
        let report = gauss_seidel_solve(&counterexample(), &SolverConfig::default()).unwrap();
        assert_eq!(report.outcome, SolveOutcome::Converged);
        assert!((report.values[0] - 5.0).abs() < 1e-9);
        assert!((report.values[1] - 10.0).abs() < 1e-9);
        assert_eq!(report.multipliers, vec![0.0, 0.0]);
        let policy = extract_policy(&report).unwrap();
        assert_eq!(policy.pure_action(0), Some(1));
        assert_eq!(policy.pure_action(1), Some(1));
        assert_eq!(report.sweeps, 3);
        assert!(*report.residual_history.last().unwrap() < 1e-8);
    }

    #[test]
    fn zero_model_converges_immediately() {
        let mdp = MdpBuilder::new()
            .transient("x")
            .transient("y")
            .target("goal")
            .unsafe_state("bad")
            .action("go")
            .transition("x", "go", "y", 0.5)
            .transition("x", "go", "goal", 0.5)
            .transition("y", "go", "goal", 1.0)
            .build()
            .unwrap();
        let report = gauss_seidel_solve(&mdp, &SolverConfig::default()).unwrap();
        assert_eq!(report.values, vec![0.0, 0.0]);
        assert_eq!(report.sweeps, 1);
    }

    #[test]
    fn infeasible_state_stops_the_solve() {
        let mdp = counterexample().with_thresholds(vec![0.125, 0.01]).unwrap();
        let report = gauss_seidel_solve(&mdp, &SolverConfig::default()).unwrap();
        assert_eq!(report.outcome, SolveOutcome::Infeasible);
        assert_eq!(report.status[1], StageStatus::Infeasible);
        assert_eq!(report.values[1], f64::INFINITY);
        assert!(matches!(extract_policy(&report), Err(Error::Infeasible(_))));
    }

    #[test]
    fn sweep_cap_reports_history() {
        let config = SolverConfig {
            max_sweeps: Some(1),
            ..SolverConfig::default()
        };
        match gauss_seidel_solve(&counterexample(), &config) {
            Err(Error::NotConverged {
                sweeps,
                residual_history,
                ..
            }) => {
                assert_eq!(sweeps, 1);
                assert_eq!(residual_history.len(), 1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn bad_parameters() {
        let mdp = counterexample();
        let cfg = SolverConfig {
            epsilon: 0.0,
            ..SolverConfig::default()
        };
        assert!(matches!(gauss_seidel_solve(&mdp, &cfg), Err(Error::Domain(_))));
        let cfg = SolverConfig {
            order: SweepOrder::Custom(vec![0, 0]),
            ..SolverConfig::default()
        };
        assert!(matches!(gauss_seidel_solve(&mdp, &cfg), Err(Error::Structural(_))));
    }

    #[test]
    fn one_state_mixture_extracts_half_half() {
        let mdp = MdpBuilder::new()
            .transient("x")
            .target("goal")
            .unsafe_state("bad")
            .action("risky")
            .action("safe")
            .transition("x", "risky", "goal", 0.9)
            .transition("x", "risky", "bad", 0.1)
            .transition("x", "safe", "goal", 1.0)
            .cost("x", "safe", 10.0)
            .threshold(0.05)
            .build()
            .unwrap();
        let report = gauss_seidel_solve(&mdp, &SolverConfig::default()).unwrap();
        let policy = extract_policy(&report).unwrap();
        assert!((policy.prob(0, 0) - 0.5).abs() < 1e-12);
        assert!((policy.prob(0, 1) - 0.5).abs() < 1e-12);
        assert!((report.values[0] - 5.0).abs() < 1e-12);
        assert!((report.multipliers[0] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn sweep_orders() {
        assert_eq!(SweepOrder::StartingAt(2).resolve(4).unwrap(), vec![2, 3, 0, 1]);
        assert_eq!(SweepOrder::Reverse.resolve(3).unwrap(), vec![2, 1, 0]);
        assert!(SweepOrder::StartingAt(4).resolve(4).is_err());
    }

    #[test]
    fn default_sweep_budget_follows_contraction() {
        // max continuation 0.5: ceil(ln 1e-8 / ln 0.5) = 27
        assert_eq!(default_max_sweeps(&counterexample(), 1e-8), 270);
    }
}
