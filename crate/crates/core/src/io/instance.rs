//! The TOML instance document.
//!
//! ```toml
//! actions = ["a", "b"]
//! format_version = 1
//! name = "example"            # optional
//! description = "..."         # optional
//! threshold = 0.125           # or a [threshold] table with one entry per transient state
//!
//! [[states]]
//! id = "i"
//! role = "transient"          # transient | target | unsafe
//!
//! [[transitions]]             # omitted entries are zero
//! action = "a"
//! from = "i"
//! probability = 0.5
//! to = "j"
//!
//! [[costs]]                   # omitted entries are zero
//! action = "a"
//! state = "i"
//! value = 0.0
//!
//! [[safety]]                  # optional; omitted entries are derived from the kernel
//! action = "a"
//! state = "i"
//! value = 0.1
//! ```
//!
//! [`serialize_instance`] writes the canonical form: keys sorted, floats with
//! 17 significant digits, entries in document order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Deserialize;
use toml::Spanned;

use super::{format_float, key, quote, ParseError, ParseErrorKind};
use crate::error::Result;
use crate::mdp::{ConstrainedMdp, MdpBuilder, StateRole};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StateDecl {
    pub id: String,
    pub role: StateRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEntry {
    pub from: String,
    pub action: String,
    pub to: String,
    pub probability: f64,
}

/// A `(state, action) → value` entry, used for costs and safety costs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionEntry {
    pub state: String,
    pub action: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Uniform(f64),
    PerState(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDocument {
    pub format_version: u32,
    pub name: Option<String>,
    pub description: Option<String>,
    pub states: Vec<StateDecl>,
    pub actions: Vec<String>,
    pub transitions: Vec<TransitionEntry>,
    pub costs: Vec<StateActionEntry>,
    pub safety: Option<Vec<StateActionEntry>>,
    pub threshold: Threshold,
}

impl InstanceDocument {
    pub fn to_mdp(&self) -> Result<ConstrainedMdp> {
        let mut b = MdpBuilder::new();
        for s in &self.states {
            b = match s.role {
                StateRole::Transient => b.transient(&s.id),
                StateRole::Target => b.target(&s.id),
                StateRole::Unsafe => b.unsafe_state(&s.id),
            };
        }
        for a in &self.actions {
            b = b.action(a);
        }
        for t in &self.transitions {
            b = b.transition(&t.from, &t.action, &t.to, t.probability);
        }
        for c in &self.costs {
            b = b.cost(&c.state, &c.action, c.value);
        }
        for k in self.safety.iter().flatten() {
            b = b.safety(&k.state, &k.action, k.value);
        }
        b = match &self.threshold {
            Threshold::Uniform(w) => b.threshold(*w),
            Threshold::PerState(map) => map.iter().fold(b, |b, (s, w)| b.state_threshold(s, *w)),
        };
        b.build()
    }

    /// Document describing `mdp`: nonzero transitions, every cost, and safety
    /// costs only when they were given explicitly.
    pub fn from_mdp(mdp: &ConstrainedMdp, name: Option<&str>, description: Option<&str>) -> Self {
        let roles = [
            (mdp.transient_states(), StateRole::Transient),
            (mdp.target_states(), StateRole::Target),
            (mdp.unsafe_states(), StateRole::Unsafe),
        ];
        let states = roles
            .iter()
            .flat_map(|(ids, role)| {
                ids.iter().map(|id| StateDecl {
                    id: id.clone(),
                    role: *role,
                })
            })
            .collect();

        let mut transitions = Vec::new();
        let mut costs = Vec::new();
        let mut safety = Vec::new();
        for (i, from) in mdp.transient_states().iter().enumerate() {
            for (a, action) in mdp.actions().iter().enumerate() {
                for (j, &p) in mdp.row(i, a).iter().enumerate() {
                    if p != 0.0 {
                        transitions.push(TransitionEntry {
                            from: from.clone(),
                            action: action.clone(),
                            to: mdp.column_label(j).to_string(),
                            probability: p,
                        });
                    }
                }
                costs.push(StateActionEntry {
                    state: from.clone(),
                    action: action.clone(),
                    value: mdp.cost(i, a),
                });
                safety.push(StateActionEntry {
                    state: from.clone(),
                    action: action.clone(),
                    value: mdp.safety_cost(i, a),
                });
            }
        }

        let w = mdp.thresholds();
        let threshold = match w.first() {
            Some(&w0) if w.iter().any(|&x| x != w0) => {
                Threshold::PerState(mdp.transient_states().iter().cloned().zip(w.iter().copied()).collect())
            }
            Some(&w0) => Threshold::Uniform(w0),
            None => Threshold::Uniform(1.0),
        };

        Self {
            format_version: FORMAT_VERSION,
            name: name.map(str::to_string),
            description: description.map(str::to_string),
            states,
            actions: mdp.actions().to_vec(),
            transitions,
            costs,
            safety: mdp.safety_is_explicit().then_some(safety),
            threshold,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    format_version: Option<Spanned<i64>>,
    name: Option<String>,
    description: Option<String>,
    #[serde(default)]
    actions: Vec<Spanned<String>>,
    #[serde(default)]
    states: Vec<RawState>,
    #[serde(default)]
    transitions: Vec<RawTransition>,
    #[serde(default)]
    costs: Vec<RawEntry>,
    safety: Option<Vec<RawEntry>>,
    threshold: Option<Spanned<RawThreshold>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    id: Spanned<String>,
    role: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    from: Spanned<String>,
    action: Spanned<String>,
    to: Spanned<String>,
    probability: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    state: Spanned<String>,
    action: Spanned<String>,
    value: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawThreshold {
    Uniform(f64),
    PerState(BTreeMap<String, f64>),
}

struct Checker<'t> {
    text: &'t str,
}

impl Checker<'_> {
    fn err<T>(
        &self,
        kind: ParseErrorKind,
        msg: impl Into<String>,
        span: std::ops::Range<usize>,
    ) -> Result<T, ParseError> {
        Err(ParseError::at(kind, msg, self.text, span.start))
    }

    fn unit_interval(&self, what: &str, v: &Spanned<f64>) -> Result<f64, ParseError> {
        let x = *v.get_ref();
        if !(0.0..=1.0).contains(&x) {
            return self.err(
                ParseErrorKind::OutOfRange,
                format!("{what} {x} outside [0, 1]"),
                v.span(),
            );
        }
        Ok(x)
    }
}

pub fn parse_instance(text: &str) -> Result<InstanceDocument, ParseError> {
    let raw: RawInstance = toml::from_str(text).map_err(|e| ParseError::from_toml(&e, text))?;
    let ck = Checker { text };

    if raw.states.is_empty() {
        return Err(ParseError::new(ParseErrorKind::Missing, "no states"));
    }
    let version = match &raw.format_version {
        None => return Err(ParseError::new(ParseErrorKind::Missing, "missing format_version")),
        Some(v) => v,
    };
    if *version.get_ref() != i64::from(FORMAT_VERSION) {
        return ck.err(
            ParseErrorKind::Version,
            format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                version.get_ref()
            ),
            version.span(),
        );
    }

    let mut roles: HashMap<String, StateRole> = HashMap::new();
    let mut states = Vec::with_capacity(raw.states.len());
    for s in &raw.states {
        let role = match s.role.get_ref().as_str() {
            "transient" => StateRole::Transient,
            "target" => StateRole::Target,
            "unsafe" => StateRole::Unsafe,
            other => {
                return ck.err(
                    ParseErrorKind::Syntax,
                    format!("unknown role `{other}` (expected transient, target or unsafe)"),
                    s.role.span(),
                )
            }
        };
        let id = s.id.get_ref().clone();
        if roles.insert(id.clone(), role).is_some() {
            return ck.err(
                ParseErrorKind::Duplicate,
                format!("state `{id}` declared twice"),
                s.id.span(),
            );
        }
        states.push(StateDecl { id, role });
    }

    if raw.actions.is_empty() {
        return Err(ParseError::new(ParseErrorKind::Missing, "no actions"));
    }
    let mut action_set = HashSet::new();
    for a in &raw.actions {
        if !action_set.insert(a.get_ref().as_str()) {
            return ck.err(
                ParseErrorKind::Duplicate,
                format!("action `{}` declared twice", a.get_ref()),
                a.span(),
            );
        }
    }

    let transient = |id: &Spanned<String>| -> Result<String, ParseError> {
        match roles.get(id.get_ref()) {
            Some(StateRole::Transient) => Ok(id.get_ref().clone()),
            Some(role) => ck.err(
                ParseErrorKind::UnknownReference,
                format!(
                    "`{}` is a {role} state; only transient states take actions",
                    id.get_ref()
                ),
                id.span(),
            ),
            None => ck.err(
                ParseErrorKind::UnknownReference,
                format!("unknown state `{}`", id.get_ref()),
                id.span(),
            ),
        }
    };
    let action = |id: &Spanned<String>| -> Result<String, ParseError> {
        if action_set.contains(id.get_ref().as_str()) {
            Ok(id.get_ref().clone())
        } else {
            ck.err(
                ParseErrorKind::UnknownReference,
                format!("unknown action `{}`", id.get_ref()),
                id.span(),
            )
        }
    };

    let mut seen = HashSet::new();
    let mut transitions = Vec::with_capacity(raw.transitions.len());
    for t in &raw.transitions {
        let from = transient(&t.from)?;
        let act = action(&t.action)?;
        if !roles.contains_key(t.to.get_ref()) {
            return ck.err(
                ParseErrorKind::UnknownReference,
                format!("unknown state `{}`", t.to.get_ref()),
                t.to.span(),
            );
        }
        let probability = ck.unit_interval("probability", &t.probability)?;
        if !seen.insert((from.clone(), act.clone(), t.to.get_ref().clone())) {
            return ck.err(
                ParseErrorKind::Duplicate,
                format!("duplicate transition {from} --{act}--> {}", t.to.get_ref()),
                t.from.span(),
            );
        }
        transitions.push(TransitionEntry {
            from,
            action: act,
            to: t.to.get_ref().clone(),
            probability,
        });
    }

    let entries = |list: &[RawEntry], what: &str, upper: Option<f64>| -> Result<Vec<StateActionEntry>, ParseError> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(list.len());
        for e in list {
            let state = transient(&e.state)?;
            let act = action(&e.action)?;
            let v = *e.value.get_ref();
            let in_range = v.is_finite() && v >= 0.0 && upper.is_none_or(|u| v <= u);
            if !in_range {
                let range = upper.map_or("[0, inf)".to_string(), |u| format!("[0, {u}]"));
                return ck.err(
                    ParseErrorKind::OutOfRange,
                    format!("{what} {v} outside {range}"),
                    e.value.span(),
                );
            }
            if !seen.insert((state.clone(), act.clone())) {
                return ck.err(
                    ParseErrorKind::Duplicate,
                    format!("duplicate {what} for ({state}, {act})"),
                    e.state.span(),
                );
            }
            out.push(StateActionEntry {
                state,
                action: act,
                value: v,
            });
        }
        Ok(out)
    };
    let costs = entries(&raw.costs, "cost", None)?;
    let safety = raw
        .safety
        .as_deref()
        .map(|s| entries(s, "safety cost", Some(1.0)))
        .transpose()?;

    let threshold = match &raw.threshold {
        None => return Err(ParseError::new(ParseErrorKind::Missing, "missing threshold")),
        Some(t) => {
            let span = t.span();
            match t.get_ref() {
                RawThreshold::Uniform(w) => {
                    if !(0.0..=1.0).contains(w) {
                        return ck.err(
                            ParseErrorKind::OutOfRange,
                            format!("threshold {w} outside [0, 1]"),
                            span,
                        );
                    }
                    Threshold::Uniform(*w)
                }
                RawThreshold::PerState(map) => {
                    for (s, w) in map {
                        if roles.get(s) != Some(&StateRole::Transient) {
                            return ck.err(
                                ParseErrorKind::UnknownReference,
                                format!("threshold for `{s}`, which is not a transient state"),
                                span,
                            );
                        }
                        if !(0.0..=1.0).contains(w) {
                            return ck.err(
                                ParseErrorKind::OutOfRange,
                                format!("threshold {w} for `{s}` outside [0, 1]"),
                                span,
                            );
                        }
                    }
                    if let Some(s) = states
                        .iter()
                        .find(|s| s.role == StateRole::Transient && !map.contains_key(&s.id))
                    {
                        return ck.err(
                            ParseErrorKind::Missing,
                            format!("no threshold for transient state `{}`", s.id),
                            span,
                        );
                    }
                    Threshold::PerState(map.clone())
                }
            }
        }
    };

    Ok(InstanceDocument {
        format_version: FORMAT_VERSION,
        name: raw.name,
        description: raw.description,
        states,
        actions: raw.actions.into_iter().map(Spanned::into_inner).collect(),
        transitions,
        costs,
        safety,
        threshold,
    })
}

pub fn serialize_instance(doc: &InstanceDocument) -> String {
    let mut out = String::new();
    let actions: Vec<String> = doc.actions.iter().map(|a| quote(a)).collect();
    let _ = writeln!(out, "actions = [{}]", actions.join(", "));
    if let Some(d) = &doc.description {
        let _ = writeln!(out, "description = {}", quote(d));
    }
    let _ = writeln!(out, "format_version = {}", doc.format_version);
    if let Some(n) = &doc.name {
        let _ = writeln!(out, "name = {}", quote(n));
    }
    if let Threshold::Uniform(w) = &doc.threshold {
        let _ = writeln!(out, "threshold = {}", format_float(*w));
    }

    let entry_table = |out: &mut String, table: &str, e: &StateActionEntry| {
        let _ = write!(
            out,
            "\n[[{table}]]\naction = {}\nstate = {}\nvalue = {}\n",
            quote(&e.action),
            quote(&e.state),
            format_float(e.value)
        );
    };
    for c in &doc.costs {
        entry_table(&mut out, "costs", c);
    }
    for k in doc.safety.iter().flatten() {
        entry_table(&mut out, "safety", k);
    }
    for s in &doc.states {
        let _ = write!(
            out,
            "\n[[states]]\nid = {}\nrole = {}\n",
            quote(&s.id),
            quote(s.role.as_str())
        );
    }
    if let Threshold::PerState(map) = &doc.threshold {
        out.push_str("\n[threshold]\n");
        for (s, w) in map {
            let _ = writeln!(out, "{} = {}", key(s), format_float(*w));
        }
    }
    for t in &doc.transitions {
        let _ = write!(
            out,
            "\n[[transitions]]\naction = {}\nfrom = {}\nprobability = {}\nto = {}\n",
            quote(&t.action),
            quote(&t.from),
            format_float(t.probability),
            quote(&t.to)
        );
    }
    out
}
