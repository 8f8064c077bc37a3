//! Closed-form regret and cell bounds.
//!
//! Notation: `t` evaluations of the optimiser, `n` points in the domain.
//! `n` is taken as `f64` so astronomically large domains (`2^100`) can be
//! passed directly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regret {
    /// `e_sup - e_best`
    pub simple: f64,
    /// `(e_sup - e_best) / e_sup`
    pub normalized: f64,
}

/// Simple and normalised regret from expected supremum and expected best.
pub fn regret_report(e_sup: f64, e_best: f64) -> Result<Regret> {
    if !(e_sup > 0.0) {
        return Err(domain(format!("normalised regret needs a positive supremum, got {e_sup}")));
    }
    let simple = e_sup - e_best;
    Ok(Regret { simple, normalized: simple / e_sup })
}

/// Exponent convention for the `(1 - T^(±1/(2π)))` factor of the upper
/// bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exponent {
    /// `1 - T^(-1/(2π))`, a factor in (0, 1).
    #[default]
    Corrected,
    /// `1 - T^(1/(2π))` exactly as printed; negative for `T > 1`.
    AsWritten,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub value: f64,
    /// Set when the as-written variant produced a bound above 1.
    pub degenerate: bool,
}

fn check_tn(t: f64, n: f64) -> Result<()> {
    if !(t >= 2.0) || !(n >= 2.0) || !t.is_finite() || !n.is_finite() {
        return Err(domain(format!("bounds need T >= 2 and N >= 2, got T={t}, N={n}")));
    }
    Ok(())
}

/// `sqrt(log2 T - log2(3 log2(T)^(3/2)))`, defined once `T` is above ~40.
fn corrected_log_root(t: f64) -> Result<f64> {
    let l = t.log2();
    let inner = l - (3.0 * l.powf(1.5)).log2();
    if !(inner > 0.0) {
        return Err(domain(format!(
            "log2(T) - log2(3 log2(T)^1.5) = {inner:.4} is not positive at T={t}"
        )));
    }
    Ok(inner.sqrt())
}

/// Upper bound on normalised regret after `t` evaluations on `n` points.
pub fn normregret_upper(t: f64, n: f64, exponent: Exponent) -> Result<UpperBound> {
    check_tn(t, n)?;
    let root = corrected_log_root(t)?;
    let power = match exponent {
        Exponent::Corrected => t.powf(-1.0 / (2.0 * PI)),
        Exponent::AsWritten => t.powf(1.0 / (2.0 * PI)),
    };
    let value = 1.0 - (1.0 - power) * root / n.log2().sqrt();
    Ok(UpperBound { value, degenerate: exponent == Exponent::AsWritten && value > 1.0 })
}

/// Lower bound on normalised regret: `1 - sqrt(log2 T / log2 N) - epsilon`.
pub fn normregret_lower(t: f64, n: f64, epsilon: f64) -> Result<f64> {
    check_tn(t, n)?;
    Ok(1.0 - (t.log2() / n.log2()).sqrt() - epsilon)
}

/// Expected maximum of a cell: the mean best value `val` divided by the
/// bound ratio `sqrt(log2 X) / sqrt(log2 N)`.
///
/// Cells with fewer than four points are enumerated by the caller, so there
/// (and for `X < 2`, where the ratio carries no information) the bound is
/// `val` itself.
pub fn cell_ub(val: f64, x: u64, n: u64) -> f64 {
    if n < 4 || x < 2 {
        return val;
    }
    val / ((x as f64).log2().sqrt() / (n as f64).log2().sqrt())
}

/// Factor separating an expected global optimum from a dominated cell:
/// `T^(1/2π) sqrt(log2 T) / ((T^(1/2π) - 1) sqrt(log2 T - log2(3 log2(T)^1.5)))`.
pub fn dominance_factor(t: f64) -> Result<f64> {
    if !(t >= 2.0) || !t.is_finite() {
        return Err(domain(format!("dominance factor needs T >= 2, got {t}")));
    }
    let root = corrected_log_root(t)?;
    let r = t.powf(1.0 / (2.0 * PI));
    Ok(r * t.log2().sqrt() / ((r - 1.0) * root))
}

/// Both regret bounds for one `(T, N)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub t: f64,
    pub n: f64,
    pub regret_upper: f64,
    pub regret_lower: f64,
    pub epsilon: f64,
    pub as_written_flag: bool,
}

pub fn bound_report(t: f64, n: f64, epsilon: f64, exponent: Exponent) -> Result<BoundReport> {
    let upper = normregret_upper(t, n, exponent)?;
    Ok(BoundReport {
        t,
        n,
        regret_upper: upper.value,
        regret_lower: normregret_lower(t, n, epsilon)?,
        epsilon,
        as_written_flag: upper.degenerate,
    })
}
