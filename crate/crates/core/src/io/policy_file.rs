//! Policy documents.
//!
//! ```toml
//! format_version = 1
//!
//! [policy.i]
//! a = 0.25
//! b = 0.75
//!
//! [policy.j]
//! b = 1.0
//! ```
//!
//! Every transient state needs a table; actions left out get probability 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;
use toml::Spanned;

use super::{format_float, key, ParseError, ParseErrorKind};
use crate::error::{Error, Result};
use crate::mdp::{ConstrainedMdp, Policy};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDocument {
    pub format_version: u32,
    pub policy: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    format_version: Option<Spanned<i64>>,
    #[serde(default)]
    policy: BTreeMap<String, BTreeMap<String, Spanned<f64>>>,
}

pub fn parse_policy(text: &str) -> Result<PolicyDocument, ParseError> {
    let raw: RawPolicy = toml::from_str(text).map_err(|e| ParseError::from_toml(&e, text))?;
    let version = raw
        .format_version
        .ok_or_else(|| ParseError::new(ParseErrorKind::Missing, "missing format_version"))?;
    if *version.get_ref() != i64::from(FORMAT_VERSION) {
        return Err(ParseError::at(
            ParseErrorKind::Version,
            format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                version.get_ref()
            ),
            text,
            version.span().start,
        ));
    }
    if raw.policy.is_empty() {
        return Err(ParseError::new(ParseErrorKind::Missing, "no policy entries"));
    }
    let mut policy = BTreeMap::new();
    for (state, row) in raw.policy {
        let mut out = BTreeMap::new();
        for (action, p) in row {
            let x = *p.get_ref();
            if !(0.0..=1.0).contains(&x) {
                return Err(ParseError::at(
                    ParseErrorKind::OutOfRange,
                    format!("probability {x} for ({state}, {action}) outside [0, 1]"),
                    text,
                    p.span().start,
                ));
            }
            out.insert(action, x);
        }
        policy.insert(state, out);
    }
    Ok(PolicyDocument {
        format_version: FORMAT_VERSION,
        policy,
    })
}

impl PolicyDocument {
    /// Resolves names against `mdp`; each row must sum to 1.
    pub fn to_policy(&self, mdp: &ConstrainedMdp) -> Result<Policy> {
        let unknown = |msg: String| Error::Parse(ParseError::new(ParseErrorKind::UnknownReference, msg));
        for (state, row) in &self.policy {
            if mdp.state_index(state).is_none() {
                return Err(unknown(format!(
                    "policy names `{state}`, which is not a transient state"
                )));
            }
            if let Some(a) = row.keys().find(|a| mdp.action_index(a).is_none()) {
                return Err(unknown(format!("unknown action `{a}` at `{state}`")));
            }
        }
        let rows = mdp
            .transient_states()
            .iter()
            .map(|s| {
                let row = self.policy.get(s).ok_or_else(|| {
                    Error::Parse(ParseError::new(ParseErrorKind::Missing, format!("no policy for `{s}`")))
                })?;
                Ok(mdp
                    .actions()
                    .iter()
                    .map(|a| row.get(a).copied().unwrap_or(0.0))
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Policy::new(rows)
    }

    pub fn from_policy(mdp: &ConstrainedMdp, policy: &Policy) -> Self {
        let policy = mdp
            .transient_states()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let row = mdp
                    .actions()
                    .iter()
                    .zip(policy.row(i))
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(a, p)| (a.clone(), *p))
                    .collect();
                (s.clone(), row)
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            policy,
        }
    }
}

pub fn serialize_policy(mdp: &ConstrainedMdp, policy: &Policy) -> String {
    let doc = PolicyDocument::from_policy(mdp, policy);
    let mut out = format!("format_version = {}\n", doc.format_version);
    for (state, row) in &doc.policy {
        let _ = writeln!(out, "\n[policy.{}]", key(state));
        for (action, p) in row {
            let _ = writeln!(out, "{} = {}", key(action), format_float(*p));
        }
    }
    out
}
