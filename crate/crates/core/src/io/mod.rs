//! Text formats and built-in instances.
//!
//! Instances and policies are TOML documents (see `docs/formats.md` in the
//! repository for the grammar). Reports are TOML, traces and residual
//! histories CSV.

pub mod builtin;
pub mod instance;
pub mod policy_file;
pub mod report;

use std::fmt;

pub use instance::{parse_instance, serialize_instance, InstanceDocument, Threshold};
pub use policy_file::{parse_policy, serialize_policy, PolicyDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    Missing,
    UnknownReference,
    OutOfRange,
    Duplicate,
    Version,
}

/// A rejected document, with a 1-based position when one is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub position: Option<(usize, usize)>,
}

impl ParseError {
    pub(crate) fn new(kind: ParseErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            position: None,
        }
    }

    pub(crate) fn at(kind: ParseErrorKind, message: impl Into<String>, text: &str, offset: usize) -> Self {
        Self {
            kind,
            message: message.into(),
            position: Some(line_column(text, offset)),
        }
    }

    pub(crate) fn from_toml(err: &toml::de::Error, text: &str) -> Self {
        let position = err.span().map(|s| line_column(text, s.start));
        Self {
            kind: ParseErrorKind::Syntax,
            message: err.message().trim().to_string(),
            position,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.position {
            Some((line, column)) => write!(f, "line {line}, column {column}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ParseError {}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let line_start = before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let column = String::from_utf8_lossy(&before[line_start..]).chars().count() + 1;
    (line, column)
}

/// Shortest-width rendering with 17 significant digits, always carrying a
/// decimal point or exponent so TOML reads it back as a float.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0.0".into()
        } else {
            "0.0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = mantissa.strip_prefix('-').map_or(("", mantissa), |m| ("-", m));
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();

    if !(-5..17).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let tail = tail.trim_end_matches('0');
        let tail = if tail.is_empty() { "0" } else { tail };
        return format!("{sign}{head}.{tail}e{exp}");
    }
    let (int_part, frac_part) = if exp >= 0 {
        let split = exp as usize + 1;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        (
            "0".to_string(),
            format!("{}{}", "0".repeat((-exp - 1) as usize), digits),
        )
    };
    let frac = frac_part.trim_end_matches('0');
    let frac = if frac.is_empty() { "0" } else { frac };
    format!("{sign}{int_part}.{frac}")
}

/// Quoted TOML string.
pub(crate) fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Bare key when possible, quoted otherwise.
pub(crate) fn key(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        s.to_string()
    } else {
        quote(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering() {
        assert_eq!(format_float(0.5), "0.5");
        assert_eq!(format_float(20.0), "20.0");
        assert_eq!(format_float(0.1), "0.10000000000000001");
        assert_eq!(format_float(-0.025), "-0.025000000000000001");
        assert_eq!(format_float(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_float(1e-6), "9.9999999999999995e-7");
        assert_eq!(format_float(2e-7), "1.9999999999999999e-7");
        assert_eq!(format_float(1e20), "1.0e20");
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn float_rendering_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 123456.789, 0.95, 1e16, 5e-5] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn positions_are_one_based() {
        assert_eq!(line_column("ab\ncd", 0), (1, 1));
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
    }
}
