//! Concentration bounds for the mean of re-sampled optimiser runs, and the
//! probability that every expansion along a path of depth `h` picks the
//! right cell.
//!
//! All returned probabilities are clamped to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationParams {
    /// Number of re-sampled runs averaged.
    pub m: u64,
    /// Deviation from the expectation.
    pub t: f64,
    /// Lower end of the value range.
    pub a: f64,
    /// Upper end of the value range.
    pub b: f64,
    /// Tree depth.
    pub h: u32,
}

impl ConcentrationParams {
    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(contract("m must be at least 1"));
        }
        if !(self.t >= 0.0) {
            return Err(contract("deviation t must be non-negative"));
        }
        if !(self.b >= self.a) {
            return Err(contract("value range needs b >= a"));
        }
        Ok(())
    }
}

/// `exp(-2 t^2 / Σ c_i^2)`.
pub fn mcdiarmid_bound(c: &[f64], t: f64) -> Result<f64> {
    if c.is_empty() {
        return Err(contract("need at least one sensitivity"));
    }
    if let Some(bad) = c.iter().find(|&&ci| !(ci >= 0.0)) {
        return Err(contract(format!("sensitivities must be non-negative, got {bad}")));
    }
    if !(t >= 0.0) {
        return Err(contract("deviation t must be non-negative"));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let total: f64 = c.iter().map(|ci| ci * ci).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok((-2.0 * t * t / total).exp().clamp(0.0, 1.0))
}

/// `exp(-2 m^2 t^2 / (b - a)^2)`.
pub fn mean_concentration_bound(p: &ConcentrationParams) -> Result<f64> {
    p.validate()?;
    if p.t == 0.0 {
        return Ok(1.0);
    }
    let range = p.b - p.a;
    if range == 0.0 {
        return Ok(0.0);
    }
    let m = p.m as f64;
    Ok((-2.0 * m * m * p.t * p.t / (range * range)).exp().clamp(0.0, 1.0))
}

/// `(1 - exp(-2 m^2 t^2 / (b - a)^2))^h`.
pub fn path_success(p: &ConcentrationParams) -> Result<f64> {
    let step = 1.0 - mean_concentration_bound(p)?;
    Ok(step.powi(p.h as i32).clamp(0.0, 1.0))
}

const MAX_SAMPLES: u64 = 1 << 40;

/// Smallest `m` with `path_success > target`, by doubling then bisection.
pub fn required_samples(h: u32, t: f64, a: f64, b: f64, target: f64) -> Result<u64> {
    if !(0.0..1.0).contains(&target) {
        return Err(contract("target must lie in [0, 1)"));
    }
    if !(b > a) {
        return Err(contract("value range needs b > a"));
    }
    if !(t >= 0.0) {
        return Err(contract("deviation t must be non-negative"));
    }
    let ok = |m: u64| -> Result<bool> { Ok(path_success(&ConcentrationParams { m, t, a, b, h })? > target) };
    if ok(1)? {
        return Ok(1);
    }
    if t == 0.0 {
        return Err(Error::Unsatisfiable(format!(
            "with t = 0 no sample count lifts path success above {target}"
        )));
    }
    let mut hi = 2;
    while !ok(hi)? {
        if hi >= MAX_SAMPLES {
            return Err(Error::Unsatisfiable(format!("target {target} needs more than {MAX_SAMPLES} samples")));
        }
        hi *= 2;
    }
    // Invariant: ok(hi) holds and ok(lo) does not.
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit mpmath references.
    const EXP_M1: f64 = 0.367_879_441_171_442_3;
    const EXP_M2: f64 = 0.135_335_283_236_612_7;
    const PATH_H10: f64 = 0.233_602_440_978_454_5;

    fn params(m: u64, t: f64, a: f64, b: f64, h: u32) -> ConcentrationParams {
        ConcentrationParams { m, t, a, b, h }
    }

    #[test]
    fn mcdiarmid_examples() {
        assert_eq!(mcdiarmid_bound(&[1.0, 1.0], 0.0).unwrap(), 1.0);
        assert!((mcdiarmid_bound(&[1.0, 1.0], 1.0).unwrap() - EXP_M1).abs() < 1e-15);
        assert_eq!(mcdiarmid_bound(&[0.0, 0.0], 0.5).unwrap(), 0.0);
        assert!(mcdiarmid_bound(&[1.0], -0.1).is_err());
        assert!(mcdiarmid_bound(&[], 1.0).is_err());
    }

    #[test]
    fn mean_bound_examples() {
        assert!((mean_concentration_bound(&params(1, 1.0, 0.0, 1.0, 0)).unwrap() - EXP_M2).abs() < 1e-15);
        assert_eq!(mean_concentration_bound(&params(5, 0.0, 0.0, 1.0, 0)).unwrap(), 1.0);
        assert!((mean_concentration_bound(&params(2, 1.0, 0.0, 2.0, 0)).unwrap() - EXP_M2).abs() < 1e-15);
        assert_eq!(mean_concentration_bound(&params(2, 1.0, 3.0, 3.0, 0)).unwrap(), 0.0);
        assert_eq!(mean_concentration_bound(&params(2, 0.0, 3.0, 3.0, 0)).unwrap(), 1.0);
        assert!(mean_concentration_bound(&params(2, 1.0, 3.0, 1.0, 0)).is_err());
    }

    #[test]
    fn aggregate_sensitivity_matches_mean_bound() {
        // One aggregate sensitivity (b - a)/m reproduces the mean bound.
        for (m, t, a, b) in [(1u64, 0.3, 0.0, 1.0), (4, 0.1, -1.0, 2.0), (9, 0.05, 0.0, 3.0)] {
            let c = (b - a) / m as f64;
            let lhs = mcdiarmid_bound(&[c], t).unwrap();
            let rhs = mean_concentration_bound(&params(m, t, a, b, 0)).unwrap();
            assert!((lhs - rhs).abs() < 1e-14, "m={m}");
            // Splitting that sensitivity over m coordinates loosens the
            // bound by a factor m in the exponent.
            let split = mcdiarmid_bound(&vec![c; m as usize], t).unwrap();
            assert!((split.ln() - rhs.ln() / m as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn path_success_examples() {
        assert_eq!(path_success(&params(1, 1.0, 0.0, 1.0, 0)).unwrap(), 1.0);
        assert!((path_success(&params(1, 1.0, 0.0, 1.0, 1)).unwrap() - (1.0 - EXP_M2)).abs() < 1e-15);
        assert!((path_success(&params(1, 1.0, 0.0, 1.0, 10)).unwrap() - PATH_H10).abs() < 1e-15);
    }

    #[test]
    fn required_samples_examples() {
        assert_eq!(required_samples(3, 0.2, 0.0, 1.0, 0.0).unwrap(), 1);
        assert_eq!(required_samples(1, 1.0, 0.0, 1.0, 0.5).unwrap(), 1);
        assert_eq!(required_samples(10, 1.0, 0.0, 1.0, 0.5).unwrap(), 2);
        assert!(matches!(required_samples(2, 0.0, 0.0, 1.0, 0.5), Err(Error::Unsatisfiable(_))));
        assert!(required_samples(2, 0.1, 0.0, 1.0, 1.0).is_err());
    }
}
