//! Machine-readable outputs: TOML reports and CSV tables.
//!
//! Floats are written with [`format_float`], so identical results give
//! byte-identical files.

use std::fmt::Write as _;

use super::{format_float, key, quote};
use crate::eval::{BarrierBundle, ValueBundle};
use crate::learner::{LearnConfig, LearnOutcome, LearnTrace};
use crate::mdp::ConstrainedMdp;
use crate::solver::{SolveOutcome, SolveReport};

pub const SCHEMA_VERSION: u32 = 1;

pub const RESIDUAL_COLUMNS: [&str; 2] = ["sweep", "sup_norm_delta"];

pub const TRACE_COLUMNS: [&str; 7] = [
    "step",
    "state",
    "action",
    "d_t",
    "sup_norm_delta",
    "episode",
    "absorbed_label",
];

fn inline_row(mdp: &ConstrainedMdp, row: &[f64]) -> String {
    let parts: Vec<String> = mdp
        .actions()
        .iter()
        .zip(row)
        .map(|(a, p)| format!("{} = {}", key(a), format_float(*p)))
        .collect();
    format!("{{ {} }}", parts.join(", "))
}

fn header(out: &mut String, kind: &str, mdp: &ConstrainedMdp) {
    let actions: Vec<String> = mdp.actions().iter().map(|a| quote(a)).collect();
    let _ = writeln!(out, "schema_version = {SCHEMA_VERSION}");
    let _ = writeln!(out, "kind = {}", quote(kind));
    let _ = writeln!(out, "actions = [{}]", actions.join(", "));
}

pub fn outcome_label(outcome: SolveOutcome) -> &'static str {
    match outcome {
        SolveOutcome::Converged => "converged",
        SolveOutcome::Infeasible => "infeasible",
    }
}

/// Solve report. `cumulative_safety` is the exact `W` of the reported policy,
/// when it could be evaluated.
pub fn solve_report_toml(mdp: &ConstrainedMdp, report: &SolveReport, cumulative_safety: Option<&[f64]>) -> String {
    let mut out = String::new();
    header(&mut out, "solve", mdp);
    let _ = writeln!(out, "outcome = {}", quote(outcome_label(report.outcome)));
    let _ = writeln!(out, "epsilon = {}", format_float(report.epsilon));
    let _ = writeln!(out, "sweeps = {}", report.sweeps);
    let _ = writeln!(
        out,
        "final_delta = {}",
        format_float(report.residual_history.last().copied().unwrap_or(0.0))
    );
    for (i, id) in mdp.transient_states().iter().enumerate() {
        let _ = write!(
            out,
            "\n[[states]]\nid = {}\nvalue = {}\nmultiplier = {}\nstatus = {}\npolicy = {}\none_step_slack = {}\n",
            quote(id),
            format_float(report.values[i]),
            format_float(report.multipliers[i]),
            quote(report.status[i].as_str()),
            inline_row(mdp, report.policy.row(i)),
            format_float(report.one_step_slack[i]),
        );
        if let Some(w) = cumulative_safety {
            let _ = writeln!(out, "cumulative_safety = {}", format_float(w[i]));
        }
        let _ = writeln!(out, "threshold = {}", format_float(mdp.threshold(i)));
    }
    out
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("utf-8 input")
}

pub fn residuals_csv(history: &[f64]) -> String {
    csv_string(
        &RESIDUAL_COLUMNS,
        history
            .iter()
            .enumerate()
            .map(|(k, d)| vec![(k + 1).to_string(), format_float(*d)]),
    )
}

pub fn value_bundle_toml(mdp: &ConstrainedMdp, bundle: &ValueBundle, barrier: Option<(f64, &BarrierBundle)>) -> String {
    let mut out = String::new();
    header(&mut out, "evaluate", mdp);
    if let Some((l, _)) = barrier {
        let _ = writeln!(out, "l = {}", format_float(l));
    }
    for (i, id) in mdp.transient_states().iter().enumerate() {
        let _ = write!(
            out,
            "\n[[states]]\nid = {}\nvalue = {}\nsafety = {}\nthreshold = {}\nfeasible = {}\n",
            quote(id),
            format_float(bundle.value[i]),
            format_float(bundle.safety[i]),
            format_float(mdp.threshold(i)),
            bundle.feasible[i],
        );
        if let Some((_, b)) = barrier {
            let _ = write!(
                out,
                "barrier_value = {}\nphi = {}\nbarrier_multiplier = {}\nclamped = {}\n",
                format_float(b.value[i]),
                format_float(b.phi[i]),
                format_float(b.multipliers[i]),
                b.clamped[i],
            );
        }
    }
    out
}

pub fn trace_csv(mdp: &ConstrainedMdp, trace: &LearnTrace) -> String {
    csv_string(
        &TRACE_COLUMNS,
        trace.rows.iter().map(|r| {
            vec![
                r.step.to_string(),
                mdp.transient_states()[r.state].clone(),
                mdp.actions()[r.action].clone(),
                format_float(r.cost),
                format_float(r.delta),
                r.episode.to_string(),
                r.absorbed.map_or("", |a| a.as_str()).to_string(),
            ]
        }),
    )
}

pub fn learn_summary_toml(mdp: &ConstrainedMdp, config: &LearnConfig, outcome: &LearnOutcome) -> String {
    let mut out = String::new();
    header(&mut out, "learn", mdp);
    let s = &outcome.state;
    let episodes = outcome
        .trace
        .rows
        .last()
        .map_or(0, |r| r.episode + u64::from(r.absorbed.is_some()));
    let _ = writeln!(out, "seed = {}", config.seed);
    let _ = writeln!(out, "l = {}", format_float(config.l));
    let _ = writeln!(out, "epsilon = {}", format_float(config.epsilon));
    let _ = writeln!(out, "exploration_floor = {}", format_float(config.exploration_floor));
    let _ = writeln!(out, "steps = {}", s.steps());
    let _ = writeln!(out, "episodes = {episodes}");
    let _ = writeln!(out, "converged = {}", outcome.trace.converged);
    for (i, id) in mdp.transient_states().iter().enumerate() {
        let counts: Vec<String> = mdp
            .actions()
            .iter()
            .enumerate()
            .map(|(a, name)| format!("{} = {}", key(name), s.greedy_count(i, a)))
            .collect();
        let _ = write!(
            out,
            "\n[[states]]\nid = {}\nvisits = {}\nlbar = {}\ngreedy_action = {}\nq = {}\npolicy = {}\n",
            quote(id),
            s.visits(i),
            format_float(s.lbar(i)),
            quote(&mdp.actions()[s.greedy_action(i)]),
            inline_row(mdp, s.q_row(i)),
            inline_row(mdp, s.policy_row(i)),
        );
        let _ = writeln!(out, "greedy_counts = {{ {} }}", counts.join(", "));
    }
    out
}
