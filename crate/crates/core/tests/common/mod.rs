//! Instance generators and reference implementations shared by the
//! integration tests. Nothing here calls into the solver or evaluator.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::VecDeque;

use cmdp::mdp::{ConstrainedMdp, MdpBuilder};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct RandomShape {
    pub max_states: usize,
    pub max_actions: usize,
    pub min_continuation: f64,
    pub max_continuation: f64,
}

impl Default for RandomShape {
    fn default() -> Self {
        Self {
            max_states: 6,
            max_actions: 4,
            min_continuation: 0.05,
            max_continuation: 0.75,
        }
    }
}

/// Random model in which action 0 is strictly safe at every state:
/// `k(i, 0) ≤ w(i) / 2`. Two target and two unsafe states.
pub fn random_instance(rng: &mut ChaCha8Rng, shape: &RandomShape) -> ConstrainedMdp {
    let n = rng.random_range(1..=shape.max_states);
    let na = rng.random_range(1..=shape.max_actions);
    let mut b = MdpBuilder::new();
    for i in 0..n {
        b = b.transient(format!("s{i}"));
    }
    b = b.target("t0").target("t1").unsafe_state("u0").unsafe_state("u1");
    for a in 0..na {
        b = b.action(format!("a{a}"));
    }
    for i in 0..n {
        let w: f64 = rng.random_range(0.05..0.5);
        b = b.state_threshold(format!("s{i}"), w);
        for a in 0..na {
            let cont = rng.random_range(shape.min_continuation..=shape.max_continuation);
            let unsafe_mass = if a == 0 {
                rng.random_range(0.0..=0.5 * w)
            } else {
                rng.random_range(0.0..=(1.0 - cont).min(0.6))
            };
            let target_mass = 1.0 - cont - unsafe_mass;

            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for (j, wj) in weights.iter().enumerate() {
                let p = cont * wj / total;
                if p > 0.0 {
                    b = b.transition(format!("s{i}"), format!("a{a}"), format!("s{j}"), p);
                }
            }
            let split: f64 = rng.random_range(0.0..=1.0);
            for (to, p) in [
                ("t0", target_mass * split),
                ("t1", target_mass * (1.0 - split)),
                ("u0", unsafe_mass * split),
                ("u1", unsafe_mass * (1.0 - split)),
            ] {
                if p > 0.0 {
                    b = b.transition(format!("s{i}"), format!("a{a}"), to, p);
                }
            }
            b = b.cost(format!("s{i}"), format!("a{a}"), rng.random_range(0.0..10.0));
        }
    }
    b.build().expect("generated instance is well formed")
}

/// Random stage game with entries in [-1, 1].
pub fn random_stage(rng: &mut ChaCha8Rng, max_actions: usize) -> (Vec<f64>, Vec<f64>) {
    let na = rng.random_range(1..=max_actions);
    let g = (0..na).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let h = (0..na).map(|_| rng.random_range(-1.0..=1.0)).collect();
    (g, h)
}

/// `min π·g` over the simplex subject to `π·h ≤ 0`, by enumerating the
/// vertices of the feasible polytope: pure actions with `h ≤ 0` and, for each
/// pair straddling zero, the mixture with `π·h = 0`. `None` when infeasible.
pub fn lp_oracle(g: &[f64], h: &[f64]) -> Option<f64> {
    let n = g.len();
    let mut best: Option<f64> = None;
    let mut offer = |v: f64| best = Some(best.map_or(v, |b: f64| b.min(v)));
    for a in 0..n {
        if h[a] <= 0.0 {
            offer(g[a]);
        }
        for b in 0..n {
            if h[a] > 0.0 && h[b] < 0.0 {
                // t h_a + (1 - t) h_b = 0
                let t = h[b] / (h[b] - h[a]);
                offer(t * g[a] + (1.0 - t) * g[b]);
            }
        }
    }
    best
}

/// The same program solved through its dual: `max_{λ ≥ 0} min_a g + λ h`.
/// The dual is concave piecewise linear, so its maximum sits at `λ = 0` or at
/// a crossing of two lines.
pub fn dual_oracle(g: &[f64], h: &[f64]) -> Option<f64> {
    if h.iter().all(|&x| x > 0.0) {
        return None;
    }
    let f = |lambda: f64| {
        g.iter()
            .zip(h)
            .map(|(g, h)| g + lambda * h)
            .fold(f64::INFINITY, f64::min)
    };
    let mut best = f(0.0);
    for a in 0..g.len() {
        for b in 0..g.len() {
            if h[a] != h[b] {
                let lambda = (g[b] - g[a]) / (h[a] - h[b]);
                if lambda > 0.0 {
                    best = best.max(f(lambda));
                }
            }
        }
    }
    Some(best)
}

/// Payoff and slack of the stage game at `i` for the value vector `values`.
pub fn stage_payoff(mdp: &ConstrainedMdp, i: usize, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = (0..mdp.n_actions())
        .map(|a| {
            let row = mdp.transient_row(i, a);
            mdp.cost(i, a) + row.iter().zip(values).map(|(p, v)| p * v).sum::<f64>()
        })
        .collect();
    let h = (0..mdp.n_actions())
        .map(|a| mdp.safety_cost(i, a) - mdp.threshold(i))
        .collect();
    (g, h)
}

/// Synchronous value iteration of the stage-game operator using
/// [`lp_oracle`]. Returns the fixed point and the sup-norm change per sweep.
pub fn jacobi_solve(mdp: &ConstrainedMdp, epsilon: f64, max_sweeps: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = mdp.n_transient();
    let mut values = vec![0.0; n];
    let mut deltas = Vec::new();
    for _ in 0..max_sweeps {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let (g, h) = stage_payoff(mdp, i, &values);
                lp_oracle(&g, &h)
            })
            .collect::<Option<_>>()?;
        let delta = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        deltas.push(delta);
        if delta < epsilon {
            return Some((values, deltas));
        }
    }
    None
}

/// Largest continuation mass over all state-action pairs.
pub fn max_continuation(mdp: &ConstrainedMdp) -> f64 {
    let mut gamma: f64 = 0.0;
    for i in 0..mdp.n_transient() {
        for a in 0..mdp.n_actions() {
            gamma = gamma.max(mdp.transient_row(i, a).iter().sum());
        }
    }
    gamma
}

/// Breadth-first distances to the nearest target on a 4-connected grid,
/// never entering a blocked cell. `None` for unreachable cells.
pub fn bfs_distances(
    rows: usize,
    cols: usize,
    targets: &[(usize, usize)],
    blocked: &[(usize, usize)],
) -> Vec<Vec<Option<u32>>> {
    let mut dist = vec![vec![None; cols]; rows];
    let mut queue = VecDeque::new();
    for &(r, c) in targets {
        dist[r][c] = Some(0);
        queue.push_back((r, c));
    }
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[r][c].unwrap();
        let mut next = Vec::new();
        if r > 0 {
            next.push((r - 1, c));
        }
        if r + 1 < rows {
            next.push((r + 1, c));
        }
        if c > 0 {
            next.push((r, c - 1));
        }
        if c + 1 < cols {
            next.push((r, c + 1));
        }
        for (nr, nc) in next {
            if dist[nr][nc].is_none() && !blocked.contains(&(nr, nc)) {
                dist[nr][nc] = Some(d + 1);
                queue.push_back((nr, nc));
            }
        }
    }
    dist
}

/// `(I - P)^{-1} b` by summing `P^t b` until the terms vanish.
pub fn neumann_solve(p: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut total = b.to_vec();
    let mut term = b.to_vec();
    for _ in 0..100_000 {
        term = (0..n).map(|i| (0..n).map(|j| p[i][j] * term[j]).sum()).collect();
        let size = term.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..n {
            total[i] += term[i];
        }
        if size < 1e-16 {
            break;
        }
    }
    total
}
