//! Finite-horizon truncation of the barrier Lagrangian.
//!
//! With per-step barrier cost `d(i) = C_π(i) + φ_π(i) / l` and continuation
//! probability at most `γ`, the tail after `T` steps is bounded by
//! `(c_M + φ_M / l) γ^T / (1 - γ)`. Requiring that tail to be at most `ε` and
//! using `-ln γ ≥ 1 - γ` gives
//!
//! ```text
//! T ≥ 1/(1-γ) · ln( (c_M + φ_M / l) / (ε (1-γ)) )
//! ```

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::eval::{Factorized, SLACK_FLOOR};
use crate::mdp::{induced_kernel, ConstrainedMdp, Policy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonBound {
    pub gamma: f64,
    pub c_max: f64,
    pub phi_max: f64,
    pub l: f64,
    pub epsilon: f64,
    /// Smallest integer horizon satisfying the bound, at least 1.
    pub steps: u64,
}

pub fn horizon_bound(gamma: f64, c_max: f64, phi_max: f64, l: f64, epsilon: f64) -> Result<HorizonBound> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon = {epsilon} must be positive")));
    }
    if !(l > 0.0) {
        return Err(Error::Domain(format!("l = {l} must be positive")));
    }
    if !(c_max >= 0.0 && phi_max >= 0.0) || !(c_max + phi_max > 0.0) {
        return Err(Error::Domain(format!(
            "cost bounds c_max = {c_max}, phi_max = {phi_max} must be nonnegative and not both zero"
        )));
    }
    let scale = c_max + phi_max / l;
    let raw = (scale / (epsilon * (1.0 - gamma))).ln() / (1.0 - gamma);
    if !raw.is_finite() {
        return Err(Error::Domain(format!("horizon bound is not finite ({raw})")));
    }
    let steps = raw.ceil().max(1.0) as u64;
    Ok(HorizonBound {
        gamma,
        c_max,
        phi_max,
        l,
        epsilon,
        steps,
    })
}

/// `c(i,a) + (1/l)(-ln(max(w - k, δ)))` for one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCost {
    pub value: f64,
    /// The slack `w - k` was below `δ` and was raised to it.
    pub clamped: bool,
}

pub fn barrier_step_cost(cost: f64, safety: f64, threshold: f64, l: f64, slack_floor: f64) -> StepCost {
    let raw = threshold - safety;
    let clamped = raw < slack_floor;
    StepCost {
        value: cost + (-raw.max(slack_floor).ln()) / l,
        clamped,
    }
}

/// Largest per-step cost and barrier term over all state-action pairs.
pub fn barrier_cost_bounds(mdp: &ConstrainedMdp, slack_floor: f64) -> (f64, f64) {
    let mut c_max: f64 = 0.0;
    let mut phi_max: f64 = 0.0;
    for i in 0..mdp.n_transient() {
        for a in 0..mdp.n_actions() {
            c_max = c_max.max(mdp.cost(i, a));
            let slack = (mdp.threshold(i) - mdp.safety_cost(i, a)).max(slack_floor);
            phi_max = phi_max.max(-slack.ln());
        }
    }
    (c_max, phi_max)
}

/// Expected per-step barrier cost under `policy`.
pub fn expected_step_costs(mdp: &ConstrainedMdp, policy: &Policy, l: f64) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    Ok((0..mdp.n_transient())
        .map(|i| {
            policy
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(a, p)| {
                    p * barrier_step_cost(mdp.cost(i, a), mdp.safety_cost(i, a), mdp.threshold(i), l, SLACK_FLOOR).value
                })
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationCheck {
    /// Fixed point of `x = d + P x`.
    pub exact: Vec<f64>,
    /// `Σ_{t<T} P^t d`.
    pub truncated: Vec<f64>,
    /// `‖exact - truncated‖_∞`.
    pub gap: f64,
}

/// Compares the exact barrier return with its `T`-step truncation.
///
/// Requires every action in the support of `policy` to be strictly inside
/// its threshold, `k(i,a) < w(i)`, so that each barrier term is finite.
pub fn truncation_check(mdp: &ConstrainedMdp, policy: &Policy, l: f64, steps: u64) -> Result<TruncationCheck> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("l = {l} must be positive")));
    }
    mdp.check_policy(policy)?;
    for i in 0..mdp.n_transient() {
        for (a, &p) in policy.row(i).iter().enumerate() {
            if p > 0.0 && mdp.safety_cost(i, a) >= mdp.threshold(i) {
                return Err(Error::Domain(format!(
                    "policy plays `{}` at `{}` with safety cost {} not below threshold {}",
                    mdp.actions()[a],
                    mdp.transient_states()[i],
                    mdp.safety_cost(i, a),
                    mdp.threshold(i)
                )));
            }
        }
    }

    let kernel = induced_kernel(mdp, policy)?;
    let d = DVector::from_vec(expected_step_costs(mdp, policy, l)?);
    let exact = Factorized::new(mdp, &kernel)?.solve(&d, "barrier return")?;

    let mut truncated = DVector::zeros(d.len());
    let mut term = d;
    for _ in 0..steps {
        truncated += &term;
        term = &kernel.transition * term;
    }
    let gap = (&exact - &truncated).amax();
    Ok(TruncationCheck {
        exact: exact.as_slice().to_vec(),
        truncated: truncated.as_slice().to_vec(),
        gap,
    })
}
