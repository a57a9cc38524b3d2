//! Solvers for reach-avoid constrained Markov decision processes.
//!
//! The state space is split into transient states `E`, absorbing target
//! states `T` and absorbing unsafe states `U`. A policy is asked to minimise
//! the expected cost accumulated before absorption while keeping the
//! probability of absorption in `U` below a per-state threshold `w`.
//!
//! The crate provides
//!
//! * [`mdp`]: the model, structural validation and policy-induced kernels,
//! * [`eval`]: exact policy evaluation, Lagrangians and a brute-force oracle,
//! * [`game`]: the one-stage `sup_λ min_π` game solved in closed form,
//! * [`solver`]: asynchronous (Gauss-Seidel) Lagrangian value iteration,
//! * [`consistency`]: start-state invariance checks for game and naive policies,
//! * [`learner`]: an episodic simulator and off-policy log-barrier Q-learning,
//! * [`horizon`]: the finite-horizon truncation bound and its empirical check,
//! * [`io`]: the TOML instance format, built-in instances and report writers.

// `!(x > 0.0)` style checks are deliberate: NaN has to fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod consistency;
pub mod error;
pub mod eval;
pub mod game;
pub mod horizon;
pub mod io;
pub mod learner;
pub mod mdp;
pub mod solver;

pub use error::{Error, Result};
pub use mdp::{ConstrainedMdp, InducedKernel, MdpBuilder, Policy, Successor};
