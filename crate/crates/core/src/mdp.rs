//! The reach-avoid model: states, actions, kernel, costs and thresholds.
//!
//! State identifiers are opaque strings. Transient states are indexed densely
//! `0..N` in declaration order, and every per-state vector in the crate uses
//! that order. Kernel columns are laid out as `[transient | target | unsafe]`.
//!
//! Target and unsafe states are absorbing and carry no cost or safety cost,
//! so they only appear as kernel columns.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on probability sums and simplex membership.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateRole {
    Transient,
    Target,
    Unsafe,
}

impl StateRole {
    pub fn as_str(self) -> &'static str {
        match self {
            StateRole::Transient => "transient",
            StateRole::Target => "target",
            StateRole::Unsafe => "unsafe",
        }
    }
}

impl fmt::Display for StateRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a kernel column leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Successor {
    Transient(usize),
    Target(usize),
    Unsafe(usize),
}

/// Dense constructor input for [`ConstrainedMdp::from_parts`].
#[derive(Debug, Clone, Default)]
pub struct MdpParts {
    pub transient: Vec<String>,
    pub targets: Vec<String>,
    pub unsafe_states: Vec<String>,
    pub actions: Vec<String>,
    /// Row-major `[(i * |A| + a) * M + column]`, `M = |E| + |T| + |U|`.
    pub kernel: Vec<f64>,
    /// Row-major `[i * |A| + a]`.
    pub cost: Vec<f64>,
    /// Explicit safety costs, `[i * |A| + a]`. Derived from the kernel when absent.
    pub safety: Option<Vec<f64>>,
    /// One threshold per transient state.
    pub threshold: Vec<f64>,
}

/// A finite reach-avoid constrained MDP.
///
/// Immutable once built. Structural consistency (dimensions, unique ids) is
/// enforced on construction; semantic invariants such as stochastic rows and
/// transience are reported as data by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedMdp {
    transient: Vec<String>,
    targets: Vec<String>,
    unsafe_states: Vec<String>,
    actions: Vec<String>,
    kernel: Vec<f64>,
    cost: Vec<f64>,
    safety: Vec<f64>,
    safety_explicit: bool,
    threshold: Vec<f64>,
}

impl ConstrainedMdp {
    pub fn from_parts(parts: MdpParts) -> Result<Self> {
        let MdpParts {
            transient,
            targets,
            unsafe_states,
            actions,
            kernel,
            cost,
            safety,
            threshold,
        } = parts;

        let mut seen = HashMap::new();
        for id in transient.iter().chain(&targets).chain(&unsafe_states) {
            if seen.insert(id.as_str(), ()).is_some() {
                return Err(Error::Structural(format!("state `{id}` declared more than once")));
            }
        }
        let mut seen_actions = HashMap::new();
        for id in &actions {
            if seen_actions.insert(id.as_str(), ()).is_some() {
                return Err(Error::Structural(format!("action `{id}` declared more than once")));
            }
        }

        let n = transient.len();
        let a = actions.len();
        let m = n + targets.len() + unsafe_states.len();
        check_len("kernel", kernel.len(), n * a * m)?;
        check_len("cost", cost.len(), n * a)?;
        check_len("threshold", threshold.len(), n)?;

        let (safety, safety_explicit) = match safety {
            Some(s) => {
                check_len("safety", s.len(), n * a)?;
                (s, true)
            }
            None => {
                let lo = n + targets.len();
                let derived = kernel
                    .chunks(m.max(1))
                    .take(n * a)
                    .map(|row| row[lo..].iter().sum())
                    .collect();
                (derived, false)
            }
        };

        Ok(Self {
            transient,
            targets,
            unsafe_states,
            actions,
            kernel,
            cost,
            safety,
            safety_explicit,
            threshold,
        })
    }

    pub fn n_transient(&self) -> usize {
        self.transient.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Number of kernel columns, `|E| + |T| + |U|`.
    pub fn n_columns(&self) -> usize {
        self.transient.len() + self.targets.len() + self.unsafe_states.len()
    }

    pub fn transient_states(&self) -> &[String] {
        &self.transient
    }

    pub fn target_states(&self) -> &[String] {
        &self.targets
    }

    pub fn unsafe_states(&self) -> &[String] {
        &self.unsafe_states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    /// Full kernel row over `E ∪ T ∪ U`.
    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let m = self.n_columns();
        let start = (state * self.n_actions() + action) * m;
        &self.kernel[start..start + m]
    }

    /// Kernel row restricted to the transient states.
    pub fn transient_row(&self, state: usize, action: usize) -> &[f64] {
        &self.row(state, action)[..self.n_transient()]
    }

    pub fn cost(&self, state: usize, action: usize) -> f64 {
        self.cost[state * self.n_actions() + action]
    }

    pub fn safety_cost(&self, state: usize, action: usize) -> f64 {
        self.safety[state * self.n_actions() + action]
    }

    /// Whether safety costs were supplied rather than derived from the kernel.
    pub fn safety_is_explicit(&self) -> bool {
        self.safety_explicit
    }

    pub fn threshold(&self, state: usize) -> f64 {
        self.threshold[state]
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.threshold
    }

    /// Probability of moving into `U` in one step.
    pub fn unsafe_mass(&self, state: usize, action: usize) -> f64 {
        let lo = self.n_transient() + self.targets.len();
        self.row(state, action)[lo..].iter().sum()
    }

    pub fn successor(&self, column: usize) -> Successor {
        let n = self.n_transient();
        let t = self.targets.len();
        if column < n {
            Successor::Transient(column)
        } else if column < n + t {
            Successor::Target(column - n)
        } else {
            Successor::Unsafe(column - n - t)
        }
    }

    pub fn column_label(&self, column: usize) -> &str {
        match self.successor(column) {
            Successor::Transient(i) => &self.transient[i],
            Successor::Target(i) => &self.targets[i],
            Successor::Unsafe(i) => &self.unsafe_states[i],
        }
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.transient.iter().position(|s| s == id)
    }

    pub fn action_index(&self, id: &str) -> Option<usize> {
        self.actions.iter().position(|s| s == id)
    }

    pub fn role_of(&self, id: &str) -> Option<StateRole> {
        if self.transient.iter().any(|s| s == id) {
            Some(StateRole::Transient)
        } else if self.targets.iter().any(|s| s == id) {
            Some(StateRole::Target)
        } else if self.unsafe_states.iter().any(|s| s == id) {
            Some(StateRole::Unsafe)
        } else {
            None
        }
    }

    /// Largest one-step continuation probability over all state-action pairs.
    ///
    /// An upper bound on `1 - min p_stop` for every policy.
    pub fn max_continuation(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.n_transient() {
            for a in 0..self.n_actions() {
                best = best.max(self.transient_row(i, a).iter().sum());
            }
        }
        best
    }

    pub fn max_cost(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    /// Copy with every kernel row rescaled to sum to one.
    ///
    /// Rows with zero mass are left untouched. Never applied implicitly.
    pub fn renormalized(&self) -> Self {
        let mut out = self.clone();
        let m = self.n_columns();
        if m > 0 {
            for row in out.kernel.chunks_mut(m) {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|p| *p /= total);
                }
            }
        }
        if !out.safety_explicit {
            let lo = self.n_transient() + self.targets.len();
            if m > 0 {
                out.safety = out.kernel.chunks(m).map(|row| row[lo..].iter().sum()).collect();
            }
        }
        out
    }

    /// Copy with a new per-state threshold vector.
    pub fn with_thresholds(&self, threshold: Vec<f64>) -> Result<Self> {
        check_len("threshold", threshold.len(), self.n_transient())?;
        let mut out = self.clone();
        out.threshold = threshold;
        Ok(out)
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.n_states() != self.n_transient() || policy.n_actions() != self.n_actions() {
            return Err(Error::Structural(format!(
                "policy is {}x{} but the model has {} transient states and {} actions",
                policy.n_states(),
                policy.n_actions(),
                self.n_transient(),
                self.n_actions()
            )));
        }
        Ok(())
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Structural(format!("{what} has {got} entries, expected {want}")));
    }
    Ok(())
}

/// Builds a [`ConstrainedMdp`] from named entries.
///
/// Missing transition entries are zero, missing costs are zero, and safety
/// costs not given explicitly are derived from the kernel.
#[derive(Debug, Clone, Default)]
pub struct MdpBuilder {
    transient: Vec<String>,
    targets: Vec<String>,
    unsafe_states: Vec<String>,
    actions: Vec<String>,
    transitions: Vec<(String, String, String, f64)>,
    costs: Vec<(String, String, f64)>,
    safety: Vec<(String, String, f64)>,
    threshold: f64,
    threshold_overrides: Vec<(String, f64)>,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self {
            threshold: 1.0,
            ..Self::default()
        }
    }

    pub fn transient(mut self, id: impl Into<String>) -> Self {
        self.transient.push(id.into());
        self
    }

    pub fn target(mut self, id: impl Into<String>) -> Self {
        self.targets.push(id.into());
        self
    }

    pub fn unsafe_state(mut self, id: impl Into<String>) -> Self {
        self.unsafe_states.push(id.into());
        self
    }

    pub fn action(mut self, id: impl Into<String>) -> Self {
        self.actions.push(id.into());
        self
    }

    pub fn transition(
        mut self,
        from: impl Into<String>,
        action: impl Into<String>,
        to: impl Into<String>,
        p: f64,
    ) -> Self {
        self.transitions.push((from.into(), action.into(), to.into(), p));
        self
    }

    pub fn cost(mut self, state: impl Into<String>, action: impl Into<String>, value: f64) -> Self {
        self.costs.push((state.into(), action.into(), value));
        self
    }

    pub fn safety(mut self, state: impl Into<String>, action: impl Into<String>, value: f64) -> Self {
        self.safety.push((state.into(), action.into(), value));
        self
    }

    /// Uniform threshold applied to every transient state without an override.
    pub fn threshold(mut self, w: f64) -> Self {
        self.threshold = w;
        self
    }

    pub fn state_threshold(mut self, state: impl Into<String>, w: f64) -> Self {
        self.threshold_overrides.push((state.into(), w));
        self
    }

    pub fn build(self) -> Result<ConstrainedMdp> {
        let n = self.transient.len();
        let na = self.actions.len();
        let columns: Vec<&String> = self
            .transient
            .iter()
            .chain(&self.targets)
            .chain(&self.unsafe_states)
            .collect();
        let m = columns.len();
        let column_of: HashMap<&str, usize> = columns.iter().enumerate().map(|(c, s)| (s.as_str(), c)).collect();
        let state_of: HashMap<&str, usize> = self
            .transient
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let action_of: HashMap<&str, usize> = self.actions.iter().enumerate().map(|(a, s)| (s.as_str(), a)).collect();

        let lookup = |map: &HashMap<&str, usize>, id: &str, what: &str| {
            map.get(id)
                .copied()
                .ok_or_else(|| Error::Structural(format!("unknown {what} `{id}`")))
        };

        let mut kernel = vec![0.0; n * na * m];
        let mut written = vec![false; n * na * m];
        for (from, action, to, p) in &self.transitions {
            let i = lookup(&state_of, from, "transient state")?;
            let a = lookup(&action_of, action, "action")?;
            let j = lookup(&column_of, to, "state")?;
            let idx = (i * na + a) * m + j;
            if written[idx] {
                return Err(Error::Structural(format!(
                    "duplicate transition {from} --{action}--> {to}"
                )));
            }
            written[idx] = true;
            kernel[idx] = *p;
        }

        let mut cost = vec![0.0; n * na];
        for (state, action, value) in &self.costs {
            let i = lookup(&state_of, state, "transient state")?;
            let a = lookup(&action_of, action, "action")?;
            cost[i * na + a] = *value;
        }

        let safety = if self.safety.is_empty() {
            None
        } else {
            let lo = n + self.targets.len();
            let mut k: Vec<f64> = (0..n * na)
                .map(|r| kernel[r * m + lo..(r + 1) * m].iter().sum())
                .collect();
            for (state, action, value) in &self.safety {
                let i = lookup(&state_of, state, "transient state")?;
                let a = lookup(&action_of, action, "action")?;
                k[i * na + a] = *value;
            }
            Some(k)
        };

        let mut threshold = vec![self.threshold; n];
        for (state, w) in &self.threshold_overrides {
            threshold[lookup(&state_of, state, "transient state")?] = *w;
        }

        ConstrainedMdp::from_parts(MdpParts {
            transient: self.transient,
            targets: self.targets,
            unsafe_states: self.unsafe_states,
            actions: self.actions,
            kernel,
            cost,
            safety,
            threshold,
        })
    }
}

/// A stationary randomised Markov policy: one distribution over actions per
/// transient state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    /// Rows must lie on the simplex within [`PROBABILITY_TOLERANCE`].
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(rows.len() * n_actions);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Structural(format!(
                    "policy row {i} has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            check_simplex(row).map_err(|msg| Error::Domain(format!("policy row {i}: {msg}")))?;
            probs.extend_from_slice(row);
        }
        Ok(Self { n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = if n_actions == 0 { 0.0 } else { 1.0 / n_actions as f64 };
        Self {
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    pub fn deterministic(choices: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; choices.len() * n_actions];
        for (i, &a) in choices.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Structural(format!(
                    "action index {a} out of range for state {i}"
                )));
            }
            probs[i * n_actions + a] = 1.0;
        }
        Ok(Self { n_actions, probs })
    }

    pub fn n_states(&self) -> usize {
        self.probs.len().checked_div(self.n_actions).unwrap_or(0)
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.n_actions.max(1))
    }

    /// The single action played at `state`, if the row is pure.
    pub fn pure_action(&self, state: usize) -> Option<usize> {
        let row = self.row(state);
        row.iter().position(|&p| (p - 1.0).abs() <= PROBABILITY_TOLERANCE)
    }

    /// `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, other: &Policy, alpha: f64) -> Result<Self> {
        if self.probs.len() != other.probs.len() || self.n_actions != other.n_actions {
            return Err(Error::Structural("cannot mix policies of different shapes".into()));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("mixing weight {alpha} outside [0, 1]")));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| alpha * p + (1.0 - alpha) * q)
            .collect();
        Ok(Self {
            n_actions: self.n_actions,
            probs,
        })
    }

    /// Largest absolute entrywise difference.
    pub fn max_deviation(&self, other: &Policy) -> f64 {
        if self.probs.len() != other.probs.len() {
            return f64::INFINITY;
        }
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}

fn check_simplex(row: &[f64]) -> std::result::Result<(), String> {
    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("entry {p} is not a probability"));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(format!("entries sum to {total}"));
    }
    Ok(())
}

/// Kernel, expected cost and unsafe-hit probabilities induced by a policy,
/// restricted to the transient states.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedKernel {
    /// `p_ij(π) = Σ_a p_ij(a) π(a|i)` for `i, j ∈ E`.
    pub transition: DMatrix<f64>,
    /// One-step expected cost `C_π(i) = Σ_a c(i,a) π(a|i)`.
    pub cost: DVector<f64>,
    /// One-step expected safety cost `K_π(i) = Σ_a k(i,a) π(a|i)`.
    pub safety: DVector<f64>,
    /// Stopping probability `1 - Σ_j p_ij(π)`.
    pub stop: DVector<f64>,
}

impl InducedKernel {
    /// Whether `‖P^m‖_∞ < 1` for some `m ≤ N`, i.e. every transient state
    /// leaves `E` with positive probability within `N` steps.
    pub fn is_transient(&self) -> bool {
        let n = self.transition.nrows();
        if n == 0 {
            return true;
        }
        let mut power = self.transition.clone();
        for m in 1..=n {
            if inf_norm(&power) < 1.0 - PROBABILITY_TOLERANCE {
                return true;
            }
            if m < n {
                power = &power * &self.transition;
            }
        }
        false
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn induced_kernel(mdp: &ConstrainedMdp, policy: &Policy) -> Result<InducedKernel> {
    mdp.check_policy(policy)?;
    let n = mdp.n_transient();
    let mut transition = DMatrix::zeros(n, n);
    let mut cost = DVector::zeros(n);
    let mut safety = DVector::zeros(n);
    for i in 0..n {
        for (a, &pi) in policy.row(i).iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (j, &p) in mdp.transient_row(i, a).iter().enumerate() {
                transition[(i, j)] += pi * p;
            }
            cost[i] += pi * mdp.cost(i, a);
            safety[i] += pi * mdp.safety_cost(i, a);
        }
    }
    let stop = DVector::from_iterator(n, transition.row_iter().map(|r| 1.0 - r.sum()));
    Ok(InducedKernel {
        transition,
        cost,
        safety,
        stop,
    })
}

/// `1 - min_i p_stop(i)`: the largest one-step continuation probability under `policy`.
pub fn gamma_max(mdp: &ConstrainedMdp, policy: &Policy) -> Result<f64> {
    let kernel = induced_kernel(mdp, policy)?;
    let min_stop = kernel.stop.iter().copied().fold(f64::INFINITY, f64::min);
    if mdp.n_transient() == 0 {
        return Ok(0.0);
    }
    if min_stop <= PROBABILITY_TOLERANCE {
        let i = kernel
            .stop
            .iter()
            .position(|&s| s <= PROBABILITY_TOLERANCE)
            .unwrap_or(0);
        return Err(Error::NotTransient(format!(
            "state `{}` has zero one-step stopping probability",
            mdp.transient_states()[i]
        )));
    }
    Ok((1.0 - min_stop).max(0.0))
}

/// A violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoTransientStates,
    NoTargetStates,
    NoUnsafeStates,
    NoActions,
    ProbabilityOutOfRange {
        state: String,
        action: String,
        to: String,
        value: f64,
    },
    RowNotStochastic {
        state: String,
        action: String,
        sum: f64,
    },
    InvalidCost {
        state: String,
        action: String,
        value: f64,
    },
    SafetyCostOutOfRange {
        state: String,
        action: String,
        value: f64,
    },
    ThresholdOutOfRange {
        state: String,
        value: f64,
    },
    /// The restricted kernel keeps mass in `E` forever under the uniform policy.
    NotTransient,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoTransientStates => write!(f, "no transient states"),
            Violation::NoTargetStates => write!(f, "no target states"),
            Violation::NoUnsafeStates => write!(f, "no unsafe states"),
            Violation::NoActions => write!(f, "no actions"),
            Violation::ProbabilityOutOfRange {
                state,
                action,
                to,
                value,
            } => {
                write!(f, "probability {state} --{action}--> {to} = {value} outside [0, 1]")
            }
            Violation::RowNotStochastic { state, action, sum } => {
                write!(f, "row not stochastic: ({state}, {action}) sums to {sum}")
            }
            Violation::InvalidCost { state, action, value } => {
                write!(
                    f,
                    "cost ({state}, {action}) = {value} is not a finite nonnegative number"
                )
            }
            Violation::SafetyCostOutOfRange { state, action, value } => {
                write!(f, "safety cost ({state}, {action}) = {value} outside [0, 1]")
            }
            Violation::ThresholdOutOfRange { state, value } => {
                write!(f, "threshold for {state} = {value} outside [0, 1]")
            }
            Violation::NotTransient => write!(
                f,
                "transience fails: under the uniform policy the kernel restricted to E keeps full mass for N steps"
            ),
        }
    }
}

/// Every violated invariant of `mdp`; empty means valid.
pub fn validate(mdp: &ConstrainedMdp) -> Vec<Violation> {
    let mut out = Vec::new();
    if mdp.n_transient() == 0 {
        out.push(Violation::NoTransientStates);
    }
    if mdp.target_states().is_empty() {
        out.push(Violation::NoTargetStates);
    }
    if mdp.unsafe_states().is_empty() {
        out.push(Violation::NoUnsafeStates);
    }
    if mdp.n_actions() == 0 {
        out.push(Violation::NoActions);
    }

    let mut rows_ok = true;
    for i in 0..mdp.n_transient() {
        let state = &mdp.transient_states()[i];
        for a in 0..mdp.n_actions() {
            let action = &mdp.actions()[a];
            let row = mdp.row(i, a);
            for (j, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    rows_ok = false;
                    out.push(Violation::ProbabilityOutOfRange {
                        state: state.clone(),
                        action: action.clone(),
                        to: mdp.column_label(j).to_string(),
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                rows_ok = false;
                out.push(Violation::RowNotStochastic {
                    state: state.clone(),
                    action: action.clone(),
                    sum,
                });
            }
            let c = mdp.cost(i, a);
            if !c.is_finite() || c < 0.0 {
                out.push(Violation::InvalidCost {
                    state: state.clone(),
                    action: action.clone(),
                    value: c,
                });
            }
            let k = mdp.safety_cost(i, a);
            if !(-PROBABILITY_TOLERANCE..=1.0 + PROBABILITY_TOLERANCE).contains(&k) {
                out.push(Violation::SafetyCostOutOfRange {
                    state: state.clone(),
                    action: action.clone(),
                    value: k,
                });
            }
        }
        let w = mdp.threshold(i);
        if !(0.0..=1.0).contains(&w) {
            out.push(Violation::ThresholdOutOfRange {
                state: state.clone(),
                value: w,
            });
        }
    }

    if rows_ok && mdp.n_transient() > 0 && mdp.n_actions() > 0 {
        let uniform = Policy::uniform(mdp.n_transient(), mdp.n_actions());
        let transient = induced_kernel(mdp, &uniform).map(|k| k.is_transient()).unwrap_or(false);
        if !transient {
            out.push(Violation::NotTransient);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::builtin::counterexample;

    fn looping() -> ConstrainedMdp {
        MdpBuilder::new()
            .transient("x")
            .transient("y")
            .target("goal")
            .unsafe_state("bad")
            .action("stay")
            .action("swap")
            .transition("x", "stay", "x", 1.0)
            .transition("x", "swap", "y", 1.0)
            .transition("y", "stay", "y", 1.0)
            .transition("y", "swap", "x", 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn counterexample_is_valid() {
        assert!(validate(&counterexample()).is_empty());
    }

    #[test]
    fn short_row_is_reported() {
        let mdp = MdpBuilder::new()
            .transient("x")
            .target("goal")
            .unsafe_state("bad")
            .action("go")
            .transition("x", "go", "goal", 0.8)
            .transition("x", "go", "bad", 0.1)
            .build()
            .unwrap();
        let v = validate(&mdp);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::RowNotStochastic { .. }));
        assert!(v[0].to_string().contains("row not stochastic"));
    }

    #[test]
    fn closed_loop_fails_transience() {
        let v = validate(&looping());
        assert_eq!(v, vec![Violation::NotTransient]);
    }

    #[test]
    fn empty_model_lists_every_missing_set() {
        let mdp = MdpBuilder::new().build().unwrap();
        let v = validate(&mdp);
        assert!(v.contains(&Violation::NoTransientStates));
        assert!(v.contains(&Violation::NoTargetStates));
        assert!(v.contains(&Violation::NoUnsafeStates));
        assert!(v.contains(&Violation::NoActions));
    }

    #[test]
    fn builder_rejects_unknown_and_duplicate_ids() {
        let err = MdpBuilder::new()
            .transient("x")
            .action("a")
            .transition("x", "a", "nowhere", 1.0)
            .build();
        assert!(matches!(err, Err(Error::Structural(_))));
        let err = MdpBuilder::new().transient("x").target("x").build();
        assert!(matches!(err, Err(Error::Structural(_))));
    }

    #[test]
    fn counterexample_b_at_j_kernel() {
        let mdp = counterexample();
        let policy = Policy::deterministic(&[1, 1], 2).unwrap();
        let k = induced_kernel(&mdp, &policy).unwrap();
        assert_eq!(k.transition[(0, 1)], 0.5);
        assert_eq!(k.transition[(0, 0)], 0.0);
        assert_eq!(k.transition[(1, 0)], 0.0);
        assert_eq!(k.transition[(1, 1)], 0.0);
        assert!((k.safety[0] - 0.1).abs() < 1e-15);
        assert!((k.safety[1] - 0.1).abs() < 1e-15);
        assert_eq!(k.stop.as_slice(), &[0.5, 1.0]);
        assert_eq!(gamma_max(&mdp, &policy).unwrap(), 0.5);
    }

    #[test]
    fn immediate_absorption_stops_with_certainty() {
        let mdp = MdpBuilder::new()
            .transient("x")
            .target("goal")
            .unsafe_state("bad")
            .action("go")
            .transition("x", "go", "goal", 1.0)
            .build()
            .unwrap();
        let policy = Policy::uniform(1, 1);
        let k = induced_kernel(&mdp, &policy).unwrap();
        assert_eq!(k.stop[0], 1.0);
        assert_eq!(k.safety[0], 0.0);
        assert_eq!(gamma_max(&mdp, &policy).unwrap(), 0.0);
    }

    #[test]
    fn gamma_is_one_minus_smallest_stop() {
        let mdp = MdpBuilder::new()
            .transient("x")
            .transient("y")
            .target("goal")
            .unsafe_state("bad")
            .action("go")
            .transition("x", "go", "y", 0.7)
            .transition("x", "go", "goal", 0.3)
            .transition("y", "go", "x", 0.1)
            .transition("y", "go", "goal", 0.9)
            .build()
            .unwrap();
        let g = gamma_max(&mdp, &Policy::uniform(2, 1)).unwrap();
        assert!((g - 0.7).abs() < 1e-15);
    }

    #[test]
    fn gamma_rejects_zero_stop() {
        let err = gamma_max(&looping(), &Policy::uniform(2, 2));
        assert!(matches!(err, Err(Error::NotTransient(_))));
    }

    #[test]
    fn policy_dimension_mismatch() {
        let err = induced_kernel(&counterexample(), &Policy::uniform(3, 2));
        assert!(matches!(err, Err(Error::Structural(_))));
    }

    #[test]
    fn policy_rows_must_be_on_simplex() {
        assert!(Policy::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(Policy::new(vec![vec![-0.1, 1.1]]).is_err());
        assert!(Policy::new(vec![vec![0.25, 0.75]]).is_ok());
    }

    #[test]
    fn renormalize_only_on_request() {
        let mdp = MdpBuilder::new()
            .transient("x")
            .target("goal")
            .unsafe_state("bad")
            .action("go")
            .transition("x", "go", "goal", 0.8)
            .transition("x", "go", "bad", 0.1)
            .build()
            .unwrap();
        assert!(!validate(&mdp).is_empty());
        let fixed = mdp.renormalized();
        assert!(validate(&fixed).is_empty());
        assert!((fixed.safety_cost(0, 0) - 1.0 / 9.0).abs() < 1e-15);
    }
}
