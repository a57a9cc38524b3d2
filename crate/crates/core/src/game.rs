//! The one-stage game between a mixed action and a nonnegative multiplier.
//!
//! For payoffs `g` and constraint slacks `h` the value is
//!
//! ```text
//! sup_{λ ≥ 0} min_a [ g(a) + λ h(a) ]  =  min { π·g : π ∈ Δ(A), π·h ≤ 0 }
//! ```
//!
//! The feasible region of the right-hand LP is a polytope whose vertices are
//! the pure actions with `h(a) ≤ 0` and the two-action mixtures sitting on
//! `π·h = 0`. Enumerating them gives the exact minimum in `O(|A|²)`. The
//! multiplier is then recovered as the smallest maximiser of the concave
//! piecewise-linear dual, whose maximum sits on a pairwise line intersection.

use crate::error::{Error, Result};
use crate::mdp::ConstrainedMdp;

pub const DEFAULT_LAMBDA_CAP: f64 = 1e12;

/// Relative tolerance used to call two candidate values equal.
const TIE_TOLERANCE: f64 = 1e-12;

/// Which action wins among value-equal candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    LowestIndex,
    #[default]
    HighestIndex,
}

impl TieBreak {
    /// Orders action indices by preference.
    fn order(self, n: usize) -> Box<dyn Iterator<Item = usize>> {
        match self {
            TieBreak::LowestIndex => Box::new(0..n),
            TieBreak::HighestIndex => Box::new((0..n).rev()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageOptions {
    pub lambda_cap: f64,
    pub tie_break: TieBreak,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            lambda_cap: DEFAULT_LAMBDA_CAP,
            tie_break: TieBreak::default(),
        }
    }
}

/// Payoff and slack per action at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGame {
    g: Vec<f64>,
    h: Vec<f64>,
}

impl StageGame {
    pub fn new(g: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::Structural("stage game needs at least one action".into()));
        }
        if g.len() != h.len() {
            return Err(Error::Structural(format!(
                "stage game payoff has {} entries but slack has {}",
                g.len(),
                h.len()
            )));
        }
        Ok(Self { g, h })
    }

    /// Game at `state` given current estimates `values` of the other states:
    /// `g(a) = c(i,a) + Σ_j p_ij(a) values(j)`, `h(a) = k(i,a) - w(i)`.
    pub fn at_state(mdp: &ConstrainedMdp, state: usize, values: &[f64]) -> Result<Self> {
        let n = mdp.n_actions();
        let mut g = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for a in 0..n {
            let continuation: f64 = mdp
                .transient_row(state, a)
                .iter()
                .zip(values)
                .filter(|(p, _)| **p != 0.0)
                .map(|(p, v)| p * v)
                .sum();
            g.push(mdp.cost(state, a) + continuation);
            h.push(mdp.safety_cost(state, a) - mdp.threshold(state));
        }
        Self::new(g, h)
    }

    pub fn payoff(&self) -> &[f64] {
        &self.g
    }

    pub fn slack(&self) -> &[f64] {
        &self.h
    }

    pub fn n_actions(&self) -> usize {
        self.g.len()
    }

    /// `min_a [g(a) + λ h(a)]`.
    pub fn dual(&self, lambda: f64) -> f64 {
        self.g
            .iter()
            .zip(&self.h)
            .map(|(g, h)| g + lambda * h)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    /// The unconstrained minimum is feasible; the multiplier is zero.
    Interior,
    /// The constraint binds; the multiplier is positive.
    Boundary,
    /// Every action has positive slack; the value is `+∞`.
    Infeasible,
}

impl StageStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StageStatus::Interior => "interior",
            StageStatus::Boundary => "boundary",
            StageStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageGameSolution {
    /// Game value; `f64::INFINITY` when infeasible.
    pub value: f64,
    /// Smallest maximising multiplier, capped at `lambda_cap`.
    pub multiplier: f64,
    /// Optimal mixed action, supported on at most two actions. For an
    /// infeasible game this is the pure action with the smallest slack.
    pub mixed_action: Vec<f64>,
    pub status: StageStatus,
}

#[derive(Debug, Clone, Copy)]
enum Support {
    Pure(usize),
    /// Weight `theta` on `over`, `1 - theta` on `under`.
    Pair {
        over: usize,
        under: usize,
        theta: f64,
    },
}

pub fn stage_val(game: &StageGame) -> StageGameSolution {
    stage_val_with(game, &StageOptions::default())
}

pub fn stage_val_with(game: &StageGame, opts: &StageOptions) -> StageGameSolution {
    let n = game.n_actions();
    let (g, h) = (&game.g, &game.h);

    if h.iter().all(|&s| s > 0.0) {
        let mut least = None::<usize>;
        for a in opts.tie_break.order(n) {
            if least.is_none_or(|b| h[a] < h[b]) {
                least = Some(a);
            }
        }
        return StageGameSolution {
            value: f64::INFINITY,
            multiplier: opts.lambda_cap,
            mixed_action: one_hot(n, least.unwrap_or(0)),
            status: StageStatus::Infeasible,
        };
    }

    let mut best: Option<(f64, Support)> = None;
    let mut consider = |value: f64, support: Support| {
        let replace = match best {
            None => true,
            Some((v, _)) => value < v - TIE_TOLERANCE * v.abs().max(1.0),
        };
        if replace {
            best = Some((value, support));
        }
    };
    // Pure vertices first so that a mixture only wins when strictly better.
    for a in opts.tie_break.order(n) {
        if h[a] <= 0.0 {
            consider(g[a], Support::Pure(a));
        }
    }
    for over in opts.tie_break.order(n) {
        if h[over] <= 0.0 {
            continue;
        }
        for under in opts.tie_break.order(n) {
            if h[under] >= 0.0 {
                continue;
            }
            let theta = -h[under] / (h[over] - h[under]);
            let value = theta * g[over] + (1.0 - theta) * g[under];
            consider(value, Support::Pair { over, under, theta });
        }
    }
    let (value, support) = best.expect("some action has nonpositive slack");

    let mut mixed_action = vec![0.0; n];
    match support {
        Support::Pure(a) => mixed_action[a] = 1.0,
        Support::Pair { over, under, theta } => {
            mixed_action[over] = theta;
            mixed_action[under] = 1.0 - theta;
        }
    }

    let unconstrained = g.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * value.abs().max(1.0);
    if value <= unconstrained + tol {
        return StageGameSolution {
            value,
            multiplier: 0.0,
            mixed_action,
            status: StageStatus::Interior,
        };
    }

    let multiplier = smallest_maximizer(game, value).min(opts.lambda_cap);
    StageGameSolution {
        value,
        multiplier,
        mixed_action,
        status: StageStatus::Boundary,
    }
}

/// Smallest `λ > 0` among pairwise line intersections at which the dual
/// reaches `value`.
fn smallest_maximizer(game: &StageGame, value: f64) -> f64 {
    let (g, h) = (&game.g, &game.h);
    let n = g.len();
    let mut breakpoints = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if h[a] != h[b] {
                let lambda = (g[b] - g[a]) / (h[a] - h[b]);
                if lambda > 0.0 && lambda.is_finite() {
                    breakpoints.push(lambda);
                }
            }
        }
    }
    breakpoints.sort_by(f64::total_cmp);
    let peak = breakpoints
        .iter()
        .map(|&l| game.dual(l))
        .fold(f64::NEG_INFINITY, f64::max);
    let target = value.min(peak);
    let tol = 1e-9 * value.abs().max(1.0);
    breakpoints
        .into_iter()
        .find(|&l| game.dual(l) >= target - tol)
        .unwrap_or(f64::INFINITY)
}

fn one_hot(n: usize, a: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[a] = 1.0;
    v
}
