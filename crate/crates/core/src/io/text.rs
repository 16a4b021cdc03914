//! Plain-text instance format:
//!
//! ```text
//! fisher 1
//! <n> <m>
//! <n budgets>
//! <m valuations>      (one line per buyer)
//! utility linear      (optional, or `quasilinear`)
//! ```
//!
//! Reals are written with 17 significant digits so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::IoError;
use crate::dual::fmt_real;
use crate::market::{MarketInstance, UtilityKind};

pub const FORMAT_MAGIC: &str = "fisher 1";

pub fn format_instance(inst: &MarketInstance<f64>) -> String {
    let mut out = String::new();
    let join = |xs: &[f64]| xs.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "{FORMAT_MAGIC}");
    let _ = writeln!(out, "{} {}", inst.n(), inst.m());
    let _ = writeln!(out, "{}", join(inst.budgets()));
    for i in 0..inst.n() {
        let _ = writeln!(out, "{}", join(inst.row(i)));
    }
    let _ = writeln!(out, "utility {}", inst.utility());
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { line, msg: msg.into() }
}

fn parse_reals(line_no: usize, line: &str, expected: usize, what: &str) -> Result<Vec<f64>, IoError> {
    let vals = line
        .split_whitespace()
        .map(|tok| tok.parse::<f64>().map_err(|_| parse_err(line_no, format!("bad {what} `{tok}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.len() != expected {
        return Err(parse_err(line_no, format!("expected {expected} {what}s, found {}", vals.len())));
    }
    Ok(vals)
}

/// Parses the text format. Blank lines are ignored; structural errors carry
/// the 1-based line number.
pub fn parse_instance(text: &str) -> Result<MarketInstance<f64>, IoError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut next =
        |what: &str| lines.next().ok_or_else(|| parse_err(0, format!("unexpected end of input, expected {what}")));

    let (ln, magic) = next("header")?;
    if magic.split_whitespace().collect::<Vec<_>>() != ["fisher", "1"] {
        return Err(parse_err(ln, format!("expected `{FORMAT_MAGIC}`, found `{magic}`")));
    }
    let (ln, dims) = next("dimensions")?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(ln, format!("bad count `{t}`"))))
        .collect::<Result<_, _>>()?;
    let [n, m] = dims[..] else {
        return Err(parse_err(ln, "expected `<n> <m>`"));
    };
    if n == 0 || m == 0 {
        return Err(parse_err(ln, "n and m must be positive"));
    }
    let (ln, line) = next("budgets")?;
    let budgets = parse_reals(ln, line, n, "budget")?;
    let mut valuations = Vec::with_capacity(n * m);
    for _ in 0..n {
        let (ln, line) = next("valuation row")?;
        valuations.extend(parse_reals(ln, line, m, "valuation")?);
    }
    let mut utility = UtilityKind::Linear;
    if let Ok((ln, line)) = next("utility") {
        let rest =
            line.strip_prefix("utility").ok_or_else(|| parse_err(ln, format!("unexpected trailing line `{line}`")))?;
        utility = rest.trim().parse().map_err(|e| parse_err(ln, format!("{e}")))?;
        if let Some((ln, extra)) = lines.next() {
            return Err(parse_err(ln, format!("unexpected trailing line `{extra}`")));
        }
    }
    Ok(MarketInstance::from_flat(budgets, m, valuations, utility)?)
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<MarketInstance<f64>, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_instance(&text)
}

pub fn write_instance(path: impl AsRef<Path>, inst: &MarketInstance<f64>) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, format_instance(inst)).map_err(|e| IoError::file(path, e))
}
