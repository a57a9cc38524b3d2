//! Built-in instances: the two-state counterexample and a gridworld generator.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::io::parse_instance;
use crate::learner::rng_from_seed;
use crate::mdp::{ConstrainedMdp, MdpBuilder};

/// Instance text of [`counterexample`].
///
/// From `i` both actions move to `j` with probability 0.5 and otherwise
/// absorb through chain 1, which hits `S1` with probability 0.1. From `j`,
/// action `a` (cost 20) absorbs through chain 2 hitting `S2` with probability
/// 0.05 and action `b` (cost 10) through chain 3 hitting `S3` with probability
/// 0.1.
pub const COUNTEREXAMPLE_TOML: &str = r#"actions = ["a", "b"]
description = "Two transient states on which start-dependent constrained optima disagree."
format_version = 1
name = "counterexample"
threshold = 0.125

[[costs]]
action = "a"
state = "i"
value = 0.0

[[costs]]
action = "b"
state = "i"
value = 0.0

[[costs]]
action = "a"
state = "j"
value = 20.0

[[costs]]
action = "b"
state = "j"
value = 10.0

[[states]]
id = "i"
role = "transient"

[[states]]
id = "j"
role = "transient"

[[states]]
id = "chain1"
role = "target"

[[states]]
id = "chain2"
role = "target"

[[states]]
id = "chain3"
role = "target"

[[states]]
id = "S1"
role = "unsafe"

[[states]]
id = "S2"
role = "unsafe"

[[states]]
id = "S3"
role = "unsafe"

[[transitions]]
action = "a"
from = "i"
probability = 0.5
to = "j"

[[transitions]]
action = "a"
from = "i"
probability = 0.4
to = "chain1"

[[transitions]]
action = "a"
from = "i"
probability = 0.1
to = "S1"

[[transitions]]
action = "b"
from = "i"
probability = 0.5
to = "j"

[[transitions]]
action = "b"
from = "i"
probability = 0.4
to = "chain1"

[[transitions]]
action = "b"
from = "i"
probability = 0.1
to = "S1"

[[transitions]]
action = "a"
from = "j"
probability = 0.95
to = "chain2"

[[transitions]]
action = "a"
from = "j"
probability = 0.05
to = "S2"

[[transitions]]
action = "b"
from = "j"
probability = 0.9
to = "chain3"

[[transitions]]
action = "b"
from = "j"
probability = 0.1
to = "S3"
"#;

pub fn counterexample() -> ConstrainedMdp {
    let mut b = MdpBuilder::new()
        .transient("i")
        .transient("j")
        .target("chain1")
        .target("chain2")
        .target("chain3")
        .unsafe_state("S1")
        .unsafe_state("S2")
        .unsafe_state("S3")
        .action("a")
        .action("b");
    for a in ["a", "b"] {
        b = b
            .transition("i", a, "j", 0.5)
            .transition("i", a, "chain1", 0.4)
            .transition("i", a, "S1", 0.1)
            .cost("i", a, 0.0);
    }
    b.transition("j", "a", "chain2", 0.95)
        .transition("j", "a", "S2", 0.05)
        .cost("j", "a", 20.0)
        .transition("j", "b", "chain3", 0.9)
        .transition("j", "b", "S3", 0.1)
        .cost("j", "b", 10.0)
        .threshold(0.125)
        .build()
        .expect("built-in instance is well formed")
}

/// Parses [`COUNTEREXAMPLE_TOML`]; equal to [`counterexample`].
pub fn counterexample_from_text() -> Result<ConstrainedMdp> {
    parse_instance(COUNTEREXAMPLE_TOML)?.to_mdp()
}

pub type Cell = (usize, usize);

pub const GRID_ACTIONS: [&str; 4] = ["N", "S", "E", "W"];

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    pub rows: usize,
    pub cols: usize,
    /// `None` places one target cell chosen with `seed`.
    pub targets: Option<Vec<Cell>>,
    /// `None` places one unsafe cell chosen with `seed`.
    pub unsafe_cells: Option<Vec<Cell>>,
    pub slip: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl GridworldSpec {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            targets: None,
            unsafe_cells: None,
            slip: 0.0,
            threshold: 0.0,
            seed: 0,
        }
    }
}

pub fn cell_id((r, c): Cell) -> String {
    format!("r{r}c{c}")
}

/// Grid with actions N, S, E, W and unit step cost.
///
/// The intended move happens with probability `1 - slip`, each perpendicular
/// move with `slip / 2`. Moving into a wall stays put. Target and unsafe cells
/// are absorbing.
pub fn gridworld(spec: &GridworldSpec) -> Result<ConstrainedMdp> {
    let GridworldSpec { rows, cols, slip, .. } = *spec;
    if rows == 0 || cols == 0 {
        return Err(Error::Domain(format!("grid {rows}x{cols} has no cells")));
    }
    if !(0.0..=0.5).contains(&slip) {
        return Err(Error::Domain(format!("slip = {slip} must lie in [0, 0.5]")));
    }
    if !(0.0..=1.0).contains(&spec.threshold) {
        return Err(Error::Domain(format!(
            "threshold = {} must lie in [0, 1]",
            spec.threshold
        )));
    }

    let mut rng = rng_from_seed(spec.seed);
    let n_cells = rows * cols;
    let placed = match (&spec.targets, &spec.unsafe_cells) {
        (None, None) if n_cells >= 2 => {
            let picks = sample(&mut rng, n_cells, 2).into_vec();
            Some((picks[0], picks[1]))
        }
        _ => None,
    };
    let to_cell = |k: usize| (k / cols, k % cols);
    let targets = match (&spec.targets, placed) {
        (Some(t), _) => t.clone(),
        (None, Some((t, _))) => vec![to_cell(t)],
        (None, None) => {
            let taken = spec.unsafe_cells.clone().unwrap_or_default();
            vec![pick_free(&mut rng, rows, cols, &taken)?]
        }
    };
    let unsafe_cells = match (&spec.unsafe_cells, placed) {
        (Some(u), _) => u.clone(),
        (None, Some((_, u))) => vec![to_cell(u)],
        (None, None) => vec![pick_free(&mut rng, rows, cols, &targets)?],
    };

    if targets.is_empty() {
        return Err(Error::Domain("gridworld needs at least one target cell".into()));
    }
    let mut role = vec![0u8; n_cells];
    for (list, tag, what) in [(&targets, 1u8, "target"), (&unsafe_cells, 2u8, "unsafe")] {
        for &(r, c) in list.iter() {
            if r >= rows || c >= cols {
                return Err(Error::Domain(format!(
                    "{what} cell ({r}, {c}) outside the {rows}x{cols} grid"
                )));
            }
            if role[r * cols + c] != 0 {
                return Err(Error::Domain(format!("cell ({r}, {c}) listed twice")));
            }
            role[r * cols + c] = tag;
        }
    }

    let mut b = MdpBuilder::new();
    for k in 0..n_cells {
        let id = cell_id(to_cell(k));
        b = match role[k] {
            0 => b.transient(id),
            1 => b.target(id),
            _ => b.unsafe_state(id),
        };
    }
    for a in GRID_ACTIONS {
        b = b.action(a);
    }
    b = b.threshold(spec.threshold);

    let step = |(r, c): Cell, dir: usize| -> Cell {
        match dir {
            0 if r > 0 => (r - 1, c),
            1 if r + 1 < rows => (r + 1, c),
            2 if c + 1 < cols => (r, c + 1),
            3 if c > 0 => (r, c - 1),
            _ => (r, c),
        }
    };
    // N/S slip east/west and vice versa
    let lateral = [[2, 3], [2, 3], [0, 1], [0, 1]];
    for k in (0..n_cells).filter(|&k| role[k] == 0) {
        let here = to_cell(k);
        for (dir, a) in GRID_ACTIONS.iter().enumerate() {
            let mut mass: Vec<(Cell, f64)> = Vec::with_capacity(3);
            let moves = [
                (dir, 1.0 - slip),
                (lateral[dir][0], slip / 2.0),
                (lateral[dir][1], slip / 2.0),
            ];
            for (d, p) in moves {
                if p == 0.0 {
                    continue;
                }
                let to = step(here, d);
                match mass.iter_mut().find(|(c, _)| *c == to) {
                    Some(entry) => entry.1 += p,
                    None => mass.push((to, p)),
                }
            }
            for (to, p) in mass {
                b = b.transition(cell_id(here), *a, cell_id(to), p);
            }
            b = b.cost(cell_id(here), *a, 1.0);
        }
    }
    b.build()
}

fn pick_free(rng: &mut crate::learner::LearnRng, rows: usize, cols: usize, taken: &[Cell]) -> Result<Cell> {
    use rand::Rng;
    let free: Vec<Cell> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|c| !taken.contains(c))
        .collect();
    if free.is_empty() {
        return Err(Error::Domain("no free cell left to place".into()));
    }
    Ok(free[rng.random_range(0..free.len())])
}
