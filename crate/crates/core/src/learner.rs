//! Episodic simulation and off-policy Q-learning of the barrier Lagrangian.
//!
//! The learner never reads the kernel. It sees the sampled successor, the
//! stage cost `c_t` and the stage safety cost `k_t` revealed by the
//! [`Environment`], and turns them into the barrier cost
//! `d_t = c_t + (1/l)(-ln(w - k_t))`.
//!
//! Per visit of state `i` the learning rate is `1 / f_i`, the sampled action's
//! Q-value moves toward `d_t + min_b Q(j, b)` (zero continuation after
//! absorption), and the currently greedy action at `i` earns one count. The
//! empirical policy is the normalised count row.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::SLACK_FLOOR;
use crate::mdp::{ConstrainedMdp, Policy, Successor};

pub use crate::horizon::{barrier_step_cost, StepCost};

pub const DEFAULT_EXPLORATION_FLOOR: f64 = 0.05;

/// Generator used for every random draw. ChaCha with 8 rounds, seeded from a
/// `u64` via `SeedableRng::seed_from_u64`.
pub type LearnRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> LearnRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Absorption {
    Target,
    Unsafe,
}

impl Absorption {
    pub fn as_str(self) -> &'static str {
        match self {
            Absorption::Target => "target",
            Absorption::Unsafe => "unsafe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub next: Successor,
    pub cost: f64,
    pub safety: f64,
}

impl Transition {
    pub fn absorption(&self) -> Option<Absorption> {
        match self.next {
            Successor::Transient(_) => None,
            Successor::Target(_) => Some(Absorption::Target),
            Successor::Unsafe(_) => Some(Absorption::Unsafe),
        }
    }
}

/// Samples transitions of a hidden model.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    mdp: &'a ConstrainedMdp,
    rows: Vec<WeightedIndex<f64>>,
}

impl<'a> Environment<'a> {
    pub fn new(mdp: &'a ConstrainedMdp) -> Result<Self> {
        let mut rows = Vec::with_capacity(mdp.n_transient() * mdp.n_actions());
        for i in 0..mdp.n_transient() {
            for a in 0..mdp.n_actions() {
                let row = WeightedIndex::new(mdp.row(i, a)).map_err(|e| {
                    Error::Structural(format!(
                        "cannot sample from row ({}, {}): {e}",
                        mdp.transient_states()[i],
                        mdp.actions()[a]
                    ))
                })?;
                rows.push(row);
            }
        }
        Ok(Self { mdp, rows })
    }

    pub fn mdp(&self) -> &ConstrainedMdp {
        self.mdp
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> Result<Transition> {
        if state >= self.mdp.n_transient() {
            return Err(Error::Structural(format!("state index {state} is not transient")));
        }
        if action >= self.mdp.n_actions() {
            return Err(Error::Structural(format!("action index {action} out of range")));
        }
        let column = self.rows[state * self.mdp.n_actions() + action].sample(rng);
        Ok(Transition {
            next: self.mdp.successor(column),
            cost: self.mdp.cost(state, action),
            safety: self.mdp.safety_cost(state, action),
        })
    }
}

/// One-off transition sample; prefer [`Environment`] in loops.
pub fn simulate_step<R: Rng + ?Sized>(
    mdp: &ConstrainedMdp,
    state: usize,
    action: usize,
    rng: &mut R,
) -> Result<Transition> {
    Environment::new(mdp)?.step(state, action, rng)
}

/// Q-table, occupation counts and the empirical policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    n_actions: usize,
    q: Vec<f64>,
    visits: Vec<u64>,
    greedy: Vec<u64>,
    tried: Vec<bool>,
    policy: Vec<f64>,
    steps: u64,
    seed: u64,
}

impl LearnerState {
    pub fn new(n_states: usize, n_actions: usize, seed: u64) -> Self {
        let uniform = if n_actions == 0 { 0.0 } else { 1.0 / n_actions as f64 };
        Self {
            n_actions,
            q: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states],
            greedy: vec![0; n_states * n_actions],
            tried: vec![false; n_states * n_actions],
            policy: vec![uniform; n_states * n_actions],
            steps: 0,
            seed,
        }
    }

    pub fn n_states(&self) -> usize {
        self.visits.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn q(&self, state: usize, action: usize) -> f64 {
        self.q[state * self.n_actions + action]
    }

    pub fn q_row(&self, state: usize) -> &[f64] {
        &self.q[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn visits(&self, state: usize) -> u64 {
        self.visits[state]
    }

    pub fn greedy_count(&self, state: usize, action: usize) -> u64 {
        self.greedy[state * self.n_actions + action]
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `1 / f_i`, or `None` before the first visit.
    pub fn learning_rate(&self, state: usize) -> Option<f64> {
        match self.visits[state] {
            0 => None,
            f => Some(1.0 / f as f64),
        }
    }

    /// `min_a Q(i, a)`.
    pub fn lbar(&self, state: usize) -> f64 {
        self.q_row(state).iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn lbar_vector(&self) -> Vec<f64> {
        (0..self.n_states()).map(|i| self.lbar(i)).collect()
    }

    /// Lowest-index minimiser of `Q(i, ·)`.
    pub fn greedy_action(&self, state: usize) -> usize {
        let row = self.q_row(state);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate() {
            if q < row[best] {
                best = a;
            }
        }
        best
    }

    pub fn policy_row(&self, state: usize) -> &[f64] {
        &self.policy[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// Empirical policy `f_{i,a} / f_i`; uniform at unvisited states.
    pub fn policy(&self) -> Policy {
        let rows = (0..self.n_states()).map(|i| self.policy_row(i).to_vec()).collect();
        Policy::new(rows).expect("count rows are normalised")
    }

    pub fn visited(&self, state: usize) -> bool {
        self.visits[state] > 0
    }

    /// Every action has been updated at least once at every visited state.
    pub fn saturated(&self) -> bool {
        (0..self.n_states()).filter(|&i| self.visited(i)).all(|i| {
            self.tried[i * self.n_actions..(i + 1) * self.n_actions]
                .iter()
                .all(|t| *t)
        })
    }

    /// Registers a visit of `state` and returns the new learning rate.
    pub fn visit(&mut self, state: usize) -> f64 {
        self.visits[state] += 1;
        self.steps += 1;
        1.0 / self.visits[state] as f64
    }

    /// `Q(i,a) ← (1-α) Q(i,a) + α (d + min_b Q(next, b))`, then one greedy
    /// count at `i` and a refresh of the empirical policy row.
    ///
    /// `next` is `None` after absorption. Returns `|Δ min_a Q(i, ·)|`.
    pub fn q_update(&mut self, state: usize, action: usize, cost: f64, next: Option<usize>) -> Result<f64> {
        let alpha = self
            .learning_rate(state)
            .ok_or_else(|| Error::Structural(format!("q_update on state {state} before its first visit")))?;
        let before = self.lbar(state);
        let continuation = next.map_or(0.0, |j| self.lbar(j));
        let idx = state * self.n_actions + action;
        self.q[idx] = (1.0 - alpha) * self.q[idx] + alpha * (cost + continuation);
        self.tried[idx] = true;

        let g = self.greedy_action(state);
        self.greedy[state * self.n_actions + g] += 1;
        let f = self.visits[state] as f64;
        for a in 0..self.n_actions {
            self.policy[state * self.n_actions + a] = self.greedy[state * self.n_actions + a] as f64 / f;
        }
        let after = self.lbar(state);
        Ok(if after == before { 0.0 } else { (after - before).abs() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    /// Barrier sharpness.
    pub l: f64,
    pub epsilon: f64,
    /// Weight of the uniform distribution mixed into the behaviour policy.
    pub exploration_floor: f64,
    pub seed: u64,
    pub max_steps: u64,
    /// Episode start distribution over transient states; uniform when `None`.
    pub initial_distribution: Option<Vec<f64>>,
    pub slack_floor: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            l: 100.0,
            epsilon: 1e-4,
            exploration_floor: DEFAULT_EXPLORATION_FLOOR,
            seed: 0,
            max_steps: 1_000_000,
            initial_distribution: None,
            slack_floor: SLACK_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub state: usize,
    pub action: usize,
    pub cost: f64,
    pub delta: f64,
    pub episode: u64,
    pub absorbed: Option<Absorption>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnTrace {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub state: LearnerState,
    pub trace: LearnTrace,
}

/// Runs episodes until the stopping rule holds or `max_steps` is spent.
///
/// The rule `‖L̃ − L̃_prev‖_∞ < ε` is checked once per round, a round being
/// the shortest stretch of steps in which every action has been updated at
/// every visited state; `L̃_prev` is the vector at the start of the round.
/// Checked step by step, the rule would fire whenever a non-minimal action
/// is updated, since that leaves `min_a Q(i, a)` unchanged.
pub fn learn(mdp: &ConstrainedMdp, config: &LearnConfig) -> Result<LearnOutcome> {
    let out = run(mdp, config, true)?;
    if out.trace.converged {
        Ok(out)
    } else {
        Err(Error::MaxStepsExhausted {
            steps: out.state.steps(),
            trace: Box::new(out.trace),
        })
    }
}

/// Runs exactly `config.max_steps` steps with the stopping rule disabled.
pub fn learn_for(mdp: &ConstrainedMdp, config: &LearnConfig) -> Result<LearnOutcome> {
    run(mdp, config, false)
}

fn run(mdp: &ConstrainedMdp, config: &LearnConfig, stop_early: bool) -> Result<LearnOutcome> {
    if !(config.l > 0.0) {
        return Err(Error::Domain(format!("l = {} must be positive", config.l)));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon = {} must be positive", config.epsilon)));
    }
    if !(0.0..=1.0).contains(&config.exploration_floor) {
        return Err(Error::Domain(format!(
            "exploration floor {} outside [0, 1]",
            config.exploration_floor
        )));
    }
    let n = mdp.n_transient();
    let na = mdp.n_actions();
    if n == 0 || na == 0 {
        return Err(Error::Structural(
            "learning needs at least one transient state and one action".into(),
        ));
    }
    let initial = match &config.initial_distribution {
        Some(d) if d.len() != n => {
            return Err(Error::Structural(format!(
                "initial distribution has {} entries for {n} states",
                d.len()
            )))
        }
        Some(d) => WeightedIndex::new(d).map_err(|e| Error::Domain(format!("initial distribution: {e}")))?,
        None => WeightedIndex::new(vec![1.0; n]).expect("uniform weights"),
    };

    let env = Environment::new(mdp)?;
    let mut rng = rng_from_seed(config.seed);
    let mut learner = LearnerState::new(n, na, config.seed);
    let mut rows = Vec::new();
    let uniform = 1.0 / na as f64;
    let mut behaviour = vec![0.0; na];
    let mut converged = false;
    let mut round_start = learner.lbar_vector();
    let mut updated = vec![false; n * na];

    let mut episode = 0u64;
    let mut state = initial.sample(&mut rng);
    while learner.steps() < config.max_steps {
        learner.visit(state);
        for (a, w) in behaviour.iter_mut().enumerate() {
            *w = (1.0 - config.exploration_floor) * learner.policy_row(state)[a] + config.exploration_floor * uniform;
        }
        let action = WeightedIndex::new(&behaviour)
            .map_err(|e| Error::Numerical(format!("behaviour policy: {e}")))?
            .sample(&mut rng);
        let tr = env.step(state, action, &mut rng)?;
        let d = barrier_step_cost(tr.cost, tr.safety, mdp.threshold(state), config.l, config.slack_floor).value;
        let next = match tr.next {
            Successor::Transient(j) => Some(j),
            _ => None,
        };
        let delta = learner.q_update(state, action, d, next)?;
        rows.push(TraceRow {
            step: learner.steps(),
            state,
            action,
            cost: d,
            delta,
            episode,
            absorbed: tr.absorption(),
        });

        updated[state * na + action] = true;
        let round_done = (0..n)
            .filter(|&i| learner.visited(i))
            .all(|i| updated[i * na..(i + 1) * na].iter().all(|u| *u));
        if stop_early && round_done {
            let change = learner
                .lbar_vector()
                .iter()
                .zip(&round_start)
                .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() })
                .fold(0.0, f64::max);
            if change < config.epsilon {
                converged = true;
                break;
            }
            round_start = learner.lbar_vector();
            updated.iter_mut().for_each(|u| *u = false);
        }
        state = match next {
            Some(j) => j,
            None => {
                episode += 1;
                initial.sample(&mut rng)
            }
        };
    }
    Ok(LearnOutcome {
        state: learner,
        trace: LearnTrace {
            seed: config.seed,
            rows,
            converged,
        },
    })
}
