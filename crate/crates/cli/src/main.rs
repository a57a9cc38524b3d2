use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmdp::consistency::bellman_consistency_check;
use cmdp::eval::{barrier_lagrangian, evaluate};
use cmdp::game::{TieBreak, DEFAULT_LAMBDA_CAP};
use cmdp::horizon::horizon_bound;
use cmdp::io::builtin::{counterexample, gridworld, GridworldSpec};
use cmdp::io::report::{learn_summary_toml, residuals_csv, solve_report_toml, trace_csv, value_bundle_toml};
use cmdp::io::{parse_instance, parse_policy, serialize_instance, InstanceDocument};
use cmdp::learner::{learn, LearnConfig, DEFAULT_EXPLORATION_FLOOR};
use cmdp::mdp::{validate, ConstrainedMdp, Policy};
use cmdp::solver::{extract_policy, gauss_seidel_solve, SolveOutcome, SolverConfig, SweepOrder, DEFAULT_EPSILON};
use cmdp::Error;

const EXIT_VIOLATIONS: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_PARSE: u8 = 4;
const EXIT_DOMAIN: u8 = 5;
const EXIT_MODEL: u8 = 6;
const EXIT_IO: u8 = 7;
const EXIT_USAGE: u8 = 64;

/// Solvers for reach-avoid constrained MDPs.
#[derive(Parser)]
#[command(name = "cmdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance and list every violated invariant.
    Validate(ModelArgs),
    /// Lagrangian value iteration with Gauss-Seidel sweeps.
    Solve(SolveArgs),
    /// Exact values of a fixed policy.
    Evaluate(EvaluateArgs),
    /// Off-policy barrier Q-learning on simulated episodes.
    Learn(LearnArgs),
    /// Horizon after which the truncated barrier return is within epsilon.
    Bound(BoundArgs),
    /// Start-dependence of naive constrained optima versus the game policy.
    DemoCounterexample,
    /// Print a built-in instance.
    Builtin(BuiltinArgs),
    /// Generate a gridworld instance.
    Gridworld(GridworldArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Instance file.
    instance: PathBuf,
    /// Rescale every kernel row with positive mass so it sums to 1.
    #[arg(long)]
    renormalize: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Lowest,
    Highest,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_CAP)]
    lambda_cap: f64,
    /// `declaration`, `reverse`, or a comma-separated list of transient state ids.
    #[arg(long, default_value = "declaration")]
    sweep_order: String,
    /// Preferred action among value-equal candidates.
    #[arg(long, value_enum, default_value_t = TieBreakArg::Highest)]
    tie_break: TieBreakArg,
    /// Sweep budget; derived from the largest continuation probability when omitted.
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-sweep sup-norm change as CSV.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Policy file.
    #[arg(long)]
    policy: PathBuf,
    /// Also report the barrier Lagrangian with this sharpness.
    #[arg(long)]
    l: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 100.0)]
    l: f64,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_EXPLORATION_FLOOR)]
    exploration_floor: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: u64,
    /// Episode start weights as `state=weight,...`; uniform when omitted.
    #[arg(long)]
    initial: Option<String>,
    /// Trace CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Final Q-table and policy; standard output when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    c_max: f64,
    #[arg(long)]
    phi_max: f64,
    #[arg(long)]
    l: f64,
    #[arg(long)]
    epsilon: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinName {
    Counterexample,
}

#[derive(Args)]
struct BuiltinArgs {
    #[arg(value_enum)]
    name: BuiltinName,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridworldArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Target cell `row,col`; repeat for several. One random cell when omitted.
    #[arg(long = "target", value_parser = parse_cell)]
    targets: Vec<(usize, usize)>,
    /// Unsafe cell `row,col`; repeat for several. One random cell when omitted.
    #[arg(long = "unsafe", value_parser = parse_cell)]
    unsafe_cells: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 0.0)]
    slip: f64,
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `row,col`, got `{s}`"))?;
    let r = r.trim().parse().map_err(|e| format!("row `{r}`: {e}"))?;
    let c = c.trim().parse().map_err(|e| format!("column `{c}`: {e}"))?;
    Ok((r, c))
}

enum Failure {
    Model(Error),
    Io(PathBuf, std::io::Error),
    Parse(PathBuf, Error),
    Argument(String),
    /// Already reported; only the exit code remains.
    Exit(u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Model(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Model(e) => match e {
                Error::Parse(_) => EXIT_PARSE,
                Error::Domain(_) => EXIT_DOMAIN,
                Error::Infeasible(_) => EXIT_INFEASIBLE,
                Error::NotConverged { .. } | Error::MaxStepsExhausted { .. } => EXIT_NOT_CONVERGED,
                Error::Structural(_) | Error::NotTransient(_) | Error::Numerical(_) | Error::TooLarge { .. } => {
                    EXIT_MODEL
                }
            },
            Failure::Io(..) => EXIT_IO,
            Failure::Parse(..) => EXIT_PARSE,
            Failure::Argument(_) => EXIT_DOMAIN,
            Failure::Exit(code) => *code,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Model(Error::Parse(e)) => write!(f, "parse error: {e}"),
            Failure::Model(e) => write!(f, "{e}"),
            Failure::Io(path, e) => write!(f, "{}: {e}", path.display()),
            Failure::Parse(path, Error::Parse(e)) => write!(f, "{}: parse error: {e}", path.display()),
            Failure::Parse(path, e) => write!(f, "{}: {e}", path.display()),
            Failure::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Failure::Exit(_) => Ok(()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(args: &ModelArgs) -> Result<ConstrainedMdp, Failure> {
    let text = read(&args.instance)?;
    let doc = parse_instance(&text).map_err(|e| Failure::Parse(args.instance.clone(), e.into()))?;
    let mdp = doc.to_mdp()?;
    Ok(if args.renormalize { mdp.renormalized() } else { mdp })
}

/// Refuses models that break an invariant, listing every violation on stderr.
fn load_valid(args: &ModelArgs) -> Result<ConstrainedMdp, Failure> {
    let mdp = load(args)?;
    let violations = validate(&mdp);
    if violations.is_empty() {
        return Ok(mdp);
    }
    for v in &violations {
        eprintln!("violation: {v}");
    }
    Err(Failure::Exit(EXIT_VIOLATIONS))
}

fn run_validate(args: &ModelArgs) -> Outcome {
    let mdp = load(args)?;
    let violations = validate(&mdp);
    for v in &violations {
        println!("violation: {v}");
    }
    if violations.is_empty() {
        println!(
            "ok: {} transient, {} target, {} unsafe states, {} actions",
            mdp.n_transient(),
            mdp.target_states().len(),
            mdp.unsafe_states().len(),
            mdp.n_actions()
        );
        Ok(())
    } else {
        Err(Failure::Exit(EXIT_VIOLATIONS))
    }
}

fn sweep_order(spec: &str, mdp: &ConstrainedMdp) -> Result<SweepOrder, Failure> {
    match spec {
        "declaration" => Ok(SweepOrder::Declaration),
        "reverse" => Ok(SweepOrder::Reverse),
        list => list
            .split(',')
            .map(|id| {
                mdp.state_index(id.trim()).ok_or_else(|| {
                    Failure::Argument(format!("sweep order names unknown transient state `{}`", id.trim()))
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(SweepOrder::Custom),
    }
}

fn run_solve(args: &SolveArgs) -> Outcome {
    let mdp = load_valid(&args.model)?;
    let config = SolverConfig {
        epsilon: args.epsilon,
        lambda_cap: args.lambda_cap,
        max_sweeps: args.max_sweeps,
        order: sweep_order(&args.sweep_order, &mdp)?,
        tie_break: match args.tie_break {
            TieBreakArg::Lowest => TieBreak::LowestIndex,
            TieBreakArg::Highest => TieBreak::HighestIndex,
        },
    };
    let report = match gauss_seidel_solve(&mdp, &config) {
        Ok(r) => r,
        Err(Error::NotConverged {
            sweeps,
            last_delta,
            residual_history,
        }) => {
            if let Some(path) = &args.residuals {
                write(path, &residuals_csv(&residual_history))?;
            }
            return Err(Error::NotConverged {
                sweeps,
                last_delta,
                residual_history,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };

    let cumulative = evaluate(&mdp, &report.policy).ok().map(|b| b.safety);
    emit(
        args.out.as_deref(),
        &solve_report_toml(&mdp, &report, cumulative.as_deref()),
    )?;
    if let Some(path) = &args.residuals {
        write(path, &residuals_csv(&report.residual_history))?;
    }
    match report.outcome {
        SolveOutcome::Converged => {
            eprintln!("converged after {} sweeps", report.sweeps);
            Ok(())
        }
        SolveOutcome::Infeasible => {
            let states: Vec<&str> = report
                .infeasible_states()
                .map(|i| mdp.transient_states()[i].as_str())
                .collect();
            eprintln!("infeasible: no action meets the threshold at {}", states.join(", "));
            Err(Failure::Exit(EXIT_INFEASIBLE))
        }
    }
}

fn run_evaluate(args: &EvaluateArgs) -> Outcome {
    let mdp = load_valid(&args.model)?;
    let policy = parse_policy(&read(&args.policy)?)
        .map_err(Error::from)
        .and_then(|doc| doc.to_policy(&mdp))
        .map_err(|e| match e {
            Error::Parse(_) => Failure::Parse(args.policy.clone(), e),
            other => Failure::Model(other),
        })?;
    let bundle = evaluate(&mdp, &policy)?;
    let barrier = args
        .l
        .map(|l| barrier_lagrangian(&mdp, &policy, l).map(|b| (l, b)))
        .transpose()?;
    let text = value_bundle_toml(&mdp, &bundle, barrier.as_ref().map(|(l, b)| (*l, b)));
    emit(args.out.as_deref(), &text)
}

fn initial_distribution(spec: &str, mdp: &ConstrainedMdp) -> Result<Vec<f64>, Failure> {
    let mut weights = vec![0.0; mdp.n_transient()];
    for part in spec.split(',') {
        let (id, w) = part
            .split_once('=')
            .ok_or_else(|| Failure::Argument(format!("expected `state=weight`, got `{part}`")))?;
        let i = mdp
            .state_index(id.trim())
            .ok_or_else(|| Failure::Argument(format!("unknown transient state `{}`", id.trim())))?;
        weights[i] = w
            .trim()
            .parse()
            .map_err(|e| Failure::Argument(format!("weight `{}`: {e}", w.trim())))?;
    }
    Ok(weights)
}

fn run_learn(args: &LearnArgs) -> Outcome {
    let mdp = load_valid(&args.model)?;
    let config = LearnConfig {
        l: args.l,
        epsilon: args.epsilon,
        exploration_floor: args.exploration_floor,
        seed: args.seed,
        max_steps: args.max_steps,
        initial_distribution: args
            .initial
            .as_deref()
            .map(|s| initial_distribution(s, &mdp))
            .transpose()?,
        ..LearnConfig::default()
    };
    match learn(&mdp, &config) {
        Ok(out) => {
            if let Some(path) = &args.out {
                write(path, &trace_csv(&mdp, &out.trace))?;
            }
            emit(args.summary.as_deref(), &learn_summary_toml(&mdp, &config, &out))?;
            eprintln!("converged after {} steps (seed {})", out.state.steps(), config.seed);
            Ok(())
        }
        Err(Error::MaxStepsExhausted { steps, trace }) => {
            if let Some(path) = &args.out {
                write(path, &trace_csv(&mdp, &trace))?;
            }
            Err(Error::MaxStepsExhausted { steps, trace }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn run_bound(args: &BoundArgs) -> Outcome {
    let bound = horizon_bound(args.gamma, args.c_max, args.phi_max, args.l, args.epsilon)?;
    println!("{}", bound.steps);
    Ok(())
}

fn run_demo() -> Outcome {
    let mdp = counterexample();
    let name = |i: usize| mdp.transient_states()[i].as_str();
    let action = |a: usize| mdp.actions()[a].as_str();

    println!(
        "policy    V(i)      V(j)      W(i)      W(j)      (w = {})",
        mdp.threshold(0)
    );
    for a_j in 0..mdp.n_actions() {
        let policy = Policy::deterministic(&[0, a_j], mdp.n_actions())?;
        let b = evaluate(&mdp, &policy)?;
        let line = format!(
            "{} at j    {:<9} {:<9} {:<9} {}",
            action(a_j),
            round(b.value[0]),
            round(b.value[1]),
            round(b.safety[0]),
            round(b.safety[1])
        );
        println!("{line}");
    }
    println!();

    let config = SolverConfig::default();
    let report = gauss_seidel_solve(&mdp, &config)?;
    let policy = extract_policy(&report)?;
    let check = bellman_consistency_check(&mdp, &policy, &config)?;

    let n = mdp.n_transient();
    for t in 0..n {
        let choices: Vec<Option<usize>> = check
            .naive_optima
            .iter()
            .map(|o| o.best.as_ref().map(|b| b.actions[t]))
            .collect();
        if choices.windows(2).all(|w| w[0] == w[1]) {
            continue;
        }
        for (s, choice) in choices.iter().enumerate() {
            match choice {
                Some(a) => println!("naive: start {} → action {} at {}", name(s), action(*a), name(t)),
                None => println!("naive: start {} → no feasible policy", name(s)),
            }
        }
    }
    for pair in check.naive.iter().filter(|p| !p.consistent) {
        println!(
            "naive: inconsistent, the policy optimal from {} plays {} at {} but the one optimal from {} plays {}",
            name(pair.start),
            action(pair.start_action),
            name(pair.state),
            name(pair.state),
            pair.own_action.map_or("nothing", action)
        );
    }
    println!();

    let independent = if check.game_consistent {
        "start-independent"
    } else {
        "start-dependent"
    };
    for t in (0..n).rev() {
        let row: Vec<String> = (0..mdp.n_actions())
            .filter(|&a| policy.prob(t, a) > 0.0)
            .map(|a| match policy.pure_action(t) {
                Some(_) => action(a).to_string(),
                None => format!("{}:{}", action(a), round(policy.prob(t, a))),
            })
            .collect();
        println!("game: action {} at {} ({independent})", row.join("+"), name(t));
    }
    let values: Vec<String> = report.values.iter().map(|v| round(*v)).collect();
    println!("game: L = [{}] after {} sweeps", values.join(", "), report.sweeps);
    Ok(())
}

fn round(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn run_builtin(args: &BuiltinArgs) -> Outcome {
    let (mdp, name) = match args.name {
        BuiltinName::Counterexample => (counterexample(), "counterexample"),
    };
    emit(
        args.out.as_deref(),
        &serialize_instance(&InstanceDocument::from_mdp(&mdp, Some(name), None)),
    )
}

fn run_gridworld(args: &GridworldArgs) -> Outcome {
    let spec = GridworldSpec {
        rows: args.rows,
        cols: args.cols,
        targets: (!args.targets.is_empty()).then(|| args.targets.clone()),
        unsafe_cells: (!args.unsafe_cells.is_empty()).then(|| args.unsafe_cells.clone()),
        slip: args.slip,
        threshold: args.threshold,
        seed: args.seed,
    };
    let mdp = gridworld(&spec)?;
    let name = format!("gridworld-{}x{}", args.rows, args.cols);
    let description = format!("slip {}, seed {}", args.slip, args.seed);
    emit(
        args.out.as_deref(),
        &serialize_instance(&InstanceDocument::from_mdp(&mdp, Some(&name), Some(&description))),
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Validate(args) => run_validate(args),
        Command::Solve(args) => run_solve(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Learn(args) => run_learn(args),
        Command::Bound(args) => run_bound(args),
        Command::DemoCounterexample => run_demo(),
        Command::Builtin(args) => run_builtin(args),
        Command::Gridworld(args) => run_gridworld(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            if !matches!(failure, Failure::Exit(_)) {
                eprintln!("error: {failure}");
            }
            ExitCode::from(failure.code())
        }
    }
}
