//! Exact evaluation of a fixed policy.
//!
//! Value and safety vectors solve `(I - P(π)) x = b` by dense LU with partial
//! pivoting; every solve is followed by a fixed-point residual check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{induced_kernel, ConstrainedMdp, InducedKernel, Policy, PROBABILITY_TOLERANCE};

/// Slack floor applied before taking the barrier logarithm.
pub const SLACK_FLOOR: f64 = 1e-12;

/// Relative bound on the post-solve fixed-point residual.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

/// Largest number of deterministic policies [`brute_force_optimal`] enumerates.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueBundle {
    /// Expected cost until absorption, `V_π`.
    pub value: Vec<f64>,
    /// Probability of absorption in the unsafe set, `W_π`.
    pub safety: Vec<f64>,
    /// `W_π(i) ≤ w(i)` up to [`PROBABILITY_TOLERANCE`].
    pub feasible: Vec<bool>,
}

/// Nonnegative per-state Lagrange multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers(Vec<f64>);

impl Multipliers {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::Domain(format!(
                "multiplier {i} is {v}, expected a nonnegative number"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Barrier approximation of the Lagrangian for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierBundle {
    /// `V(i) + φ(i) / l`.
    pub value: Vec<f64>,
    /// `-ln(max(w(i) - W(i), δ))`.
    pub phi: Vec<f64>,
    /// `1 / (l · max(w(i) - W(i), δ))`.
    pub multipliers: Vec<f64>,
    /// States whose slack was raised to the floor.
    pub clamped: Vec<bool>,
}

pub(crate) struct Factorized {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    transition: DMatrix<f64>,
}

impl Factorized {
    /// Factorises `I - P` after confirming transience.
    pub(crate) fn new(mdp: &ConstrainedMdp, kernel: &InducedKernel) -> Result<Self> {
        if !kernel.is_transient() {
            return Err(Error::NotTransient(
                "I - P(π) is singular: some transient state never leaves E under this policy".into(),
            ));
        }
        let n = mdp.n_transient();
        let system = DMatrix::identity(n, n) - &kernel.transition;
        let lu = system.lu();
        if !lu.is_invertible() {
            return Err(Error::NotTransient("I - P(π) is singular".into()));
        }
        Ok(Self {
            lu,
            transition: kernel.transition.clone(),
        })
    }

    /// Solves `x = b + P x` and checks the residual.
    pub(crate) fn solve(&self, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
        let x = self
            .lu
            .solve(rhs)
            .ok_or_else(|| Error::NotTransient("I - P(π) is singular".into()))?;
        let residual = (&x - rhs - &self.transition * &x).amax();
        let scale = x.amax().max(1.0);
        if !(residual <= RESIDUAL_TOLERANCE * scale) {
            return Err(Error::Numerical(format!(
                "{what}: fixed-point residual {residual:e} exceeds {:e}",
                RESIDUAL_TOLERANCE * scale
            )));
        }
        Ok(x)
    }
}

pub fn evaluate(mdp: &ConstrainedMdp, policy: &Policy) -> Result<ValueBundle> {
    let kernel = induced_kernel(mdp, policy)?;
    let system = Factorized::new(mdp, &kernel)?;
    let value = system.solve(&kernel.cost, "value")?;
    let safety = system.solve(&kernel.safety, "safety")?;
    let feasible = safety
        .iter()
        .zip(mdp.thresholds())
        .map(|(w_pi, w)| *w_pi <= w + PROBABILITY_TOLERANCE)
        .collect();
    Ok(ValueBundle {
        value: value.as_slice().to_vec(),
        safety: safety.as_slice().to_vec(),
        feasible,
    })
}

/// `L(i) = V(i) + λ(i) (W(i) - w(i))`.
pub fn lagrangian(mdp: &ConstrainedMdp, policy: &Policy, multipliers: &Multipliers) -> Result<Vec<f64>> {
    if multipliers.as_slice().len() != mdp.n_transient() {
        return Err(Error::Structural(format!(
            "{} multipliers for {} transient states",
            multipliers.as_slice().len(),
            mdp.n_transient()
        )));
    }
    let bundle = evaluate(mdp, policy)?;
    Ok(bundle
        .value
        .iter()
        .zip(&bundle.safety)
        .zip(multipliers.as_slice())
        .zip(mdp.thresholds())
        .map(|(((v, w_pi), lambda), w)| v + lambda * (w_pi - w))
        .collect())
}

pub fn barrier_lagrangian(mdp: &ConstrainedMdp, policy: &Policy, l: f64) -> Result<BarrierBundle> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::Domain(format!(
            "barrier sharpness l = {l} must be a positive finite number"
        )));
    }
    let bundle = evaluate(mdp, policy)?;
    let n = mdp.n_transient();
    let mut out = BarrierBundle {
        value: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        multipliers: Vec::with_capacity(n),
        clamped: Vec::with_capacity(n),
    };
    for i in 0..n {
        let raw = mdp.threshold(i) - bundle.safety[i];
        let clamped = raw < SLACK_FLOOR;
        let slack = raw.max(SLACK_FLOOR);
        let phi = -slack.ln();
        out.value.push(bundle.value[i] + phi / l);
        out.phi.push(phi);
        out.multipliers.push(1.0 / (l * slack));
        out.clamped.push(clamped);
    }
    Ok(out)
}

/// Best deterministic policy for one start state under the naive per-start constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveOptimum {
    /// Action index per transient state.
    pub actions: Vec<usize>,
    pub value: f64,
    pub safety: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartOptimum {
    pub start: usize,
    /// `None` when no deterministic policy satisfies `W(start) ≤ w(start)`.
    pub best: Option<NaiveOptimum>,
}

/// Enumerates every deterministic policy and, for each start state `s`,
/// keeps the one minimising `V(s)` subject to `W(s) ≤ w(s)` only.
///
/// Policies under which some state never leaves `E` are skipped. Ties go to
/// the lexicographically smallest action vector (state 0 most significant).
pub fn brute_force_optimal(mdp: &ConstrainedMdp) -> Result<Vec<StartOptimum>> {
    let n = mdp.n_transient();
    let na = mdp.n_actions();
    if na == 0 {
        return Err(Error::Structural("model has no actions".into()));
    }
    let count = (na as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            policies: count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let mut best: Vec<Option<NaiveOptimum>> = vec![None; n];
    let mut choice = vec![0usize; n];
    loop {
        let policy = Policy::deterministic(&choice, na)?;
        match evaluate(mdp, &policy) {
            Ok(bundle) => {
                for s in 0..n {
                    if bundle.safety[s] > mdp.threshold(s) + PROBABILITY_TOLERANCE {
                        continue;
                    }
                    let v = bundle.value[s];
                    let better = match &best[s] {
                        None => true,
                        Some(b) => v < b.value - PROBABILITY_TOLERANCE * b.value.abs().max(1.0),
                    };
                    if better {
                        best[s] = Some(NaiveOptimum {
                            actions: choice.clone(),
                            value: v,
                            safety: bundle.safety[s],
                        });
                    }
                }
            }
            Err(Error::NotTransient(_)) => {}
            Err(e) => return Err(e),
        }
        if !advance(&mut choice, na) {
            break;
        }
    }
    Ok(best
        .into_iter()
        .enumerate()
        .map(|(start, best)| StartOptimum { start, best })
        .collect())
}

/// Lexicographic successor with the last position varying fastest.
fn advance(choice: &mut [usize], radix: usize) -> bool {
    for slot in choice.iter_mut().rev() {
        *slot += 1;
        if *slot < radix {
            return true;
        }
        *slot = 0;
    }
    false
}
