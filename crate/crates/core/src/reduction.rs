//! Combinatorial instance → univariate integer-domain function.
//!
//! A [`ReducedFunction`] maps each `x` in `{d0..=d1}` to one extension of a
//! partial assignment. It halves the current interval `k` times, `k` being
//! the number of unassigned variables. At depth `j` the variable
//! `permutation[j]` gets 0 when `x` falls in the first half `{lo..=mid}` and
//! 1 when it falls in `{mid+1..=hi}`, with `mid = lo + (hi - lo) / 2`. The
//! interval has exactly `2^k` points, so the halving is the binary expansion
//! of `x - d0` read from the most significant bit.
//!
//! The permutation is a Fisher–Yates shuffle of the unassigned variable
//! indices (ascending) driven by [`crate::rng::seeded`], so a seed fixes the
//! function bit for bit.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::problems::{Assignment, ProblemInstance};
use crate::rng;

/// Largest supported number of unassigned variables; keeps `d1` inside u64.
pub const MAX_FREE_VARIABLES: usize = 62;

/// Values fixed for a subset of variables (0-based indices).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartialAssignment(BTreeMap<usize, bool>);

impl PartialAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: usize, value: bool) -> Self {
        self.0.insert(var, value);
        self
    }

    pub fn insert(&mut self, var: usize, value: bool) {
        self.0.insert(var, value);
    }

    pub fn get(&self, var: usize) -> Option<bool> {
        self.0.get(&var).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    /// True when `a` agrees with every fixed variable.
    pub fn is_extended_by(&self, a: &Assignment) -> bool {
        self.iter().all(|(var, value)| a.bits().get(var) == Some(&value))
    }
}

#[derive(Debug, Clone)]
pub struct ReducedFunction {
    instance: Arc<ProblemInstance>,
    permutation: Vec<usize>,
    scale: f64,
    partial: PartialAssignment,
    d0: u64,
    d1: u64,
    seed: u64,
}

/// Ascending list of variables not fixed by `partial`.
fn free_variables(instance: &ProblemInstance, partial: &PartialAssignment) -> Result<Vec<usize>> {
    let n = instance.variable_count();
    if let Some((var, _)) = partial.iter().find(|&(v, _)| v >= n) {
        return Err(contract(format!("partial assignment fixes variable {var}, instance has {n}")));
    }
    Ok((0..n).filter(|&v| partial.get(v).is_none()).collect())
}

fn check_domain(free: usize, d0: u64, d1: u64) -> Result<()> {
    if free > MAX_FREE_VARIABLES {
        return Err(Error::TooLarge { n: free, limit: MAX_FREE_VARIABLES });
    }
    if d0 < 1 {
        return Err(contract("domain lower bound must be at least 1"));
    }
    let expected = 1u64 << free;
    if d1 < d0 || d1 - d0 + 1 != expected {
        return Err(contract(format!(
            "domain {{{d0}..{d1}}} must hold exactly 2^{free} = {expected} points"
        )));
    }
    Ok(())
}

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(contract(format!("scale must be positive and finite, got {scale}")))
    }
}

impl ReducedFunction {
    /// Builds the function with a seeded random order of the free variables.
    pub fn build(
        instance: Arc<ProblemInstance>,
        seed: u64,
        scale: f64,
        partial: PartialAssignment,
        d0: u64,
        d1: u64,
    ) -> Result<Self> {
        check_scale(scale)?;
        let mut permutation = free_variables(&instance, &partial)?;
        check_domain(permutation.len(), d0, d1)?;
        rng::shuffle(&mut rng::seeded(seed), &mut permutation);
        Ok(ReducedFunction { instance, permutation, scale, partial, d0, d1, seed })
    }

    /// Builds the function with an explicit variable order. `permutation`
    /// must be a bijection on the free variables.
    pub fn with_permutation(
        instance: Arc<ProblemInstance>,
        permutation: Vec<usize>,
        scale: f64,
        partial: PartialAssignment,
        d0: u64,
        d1: u64,
    ) -> Result<Self> {
        check_scale(scale)?;
        let free = free_variables(&instance, &partial)?;
        let mut sorted = permutation.clone();
        sorted.sort_unstable();
        if sorted != free {
            return Err(contract("permutation is not a bijection on the unassigned variables"));
        }
        check_domain(free.len(), d0, d1)?;
        Ok(ReducedFunction { instance, permutation, scale, partial, d0, d1, seed: 0 })
    }

    /// Same instance, partial assignment and domain with a fresh variable
    /// order and scale.
    pub fn resample(&self, seed: u64, scale: f64) -> Result<Self> {
        Self::build(self.instance.clone(), seed, scale, self.partial.clone(), self.d0, self.d1)
    }

    pub fn instance(&self) -> &Arc<ProblemInstance> {
        &self.instance
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn partial(&self) -> &PartialAssignment {
        &self.partial
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bounds(&self) -> (u64, u64) {
        (self.d0, self.d1)
    }

    pub fn domain_size(&self) -> u64 {
        self.d1 - self.d0 + 1
    }

    fn check_point(&self, x: u64) -> Result<()> {
        if x < self.d0 || x > self.d1 {
            return Err(contract(format!("point {x} outside domain {{{}..{}}}", self.d0, self.d1)));
        }
        Ok(())
    }

    fn decode_into(&self, x: u64, bits: &mut [bool]) {
        for (var, value) in self.partial.iter() {
            bits[var] = value;
        }
        let offset = x - self.d0;
        let k = self.permutation.len();
        for (depth, &var) in self.permutation.iter().enumerate() {
            bits[var] = (offset >> (k - 1 - depth)) & 1 == 1;
        }
    }

    /// Assignment selected by `x`.
    pub fn decode(&self, x: u64) -> Result<Assignment> {
        self.check_point(x)?;
        let mut bits = vec![false; self.instance.variable_count()];
        self.decode_into(x, &mut bits);
        Ok(Assignment::new(bits))
    }

    /// Inverse of [`decode`](Self::decode): the point that selects `a`.
    pub fn encode(&self, a: &Assignment) -> Result<u64> {
        if a.len() != self.instance.variable_count() {
            return Err(contract("assignment length does not match the instance"));
        }
        if !self.partial.is_extended_by(a) {
            return Err(contract("assignment does not extend the partial assignment"));
        }
        let offset = self
            .permutation
            .iter()
            .fold(0u64, |acc, &var| (acc << 1) | u64::from(a.bits()[var]));
        Ok(self.d0 + offset)
    }

    /// `scale * utility(decode(x))`.
    pub fn eval(&self, x: u64) -> Result<f64> {
        self.check_point(x)?;
        let mut bits = vec![false; self.instance.variable_count()];
        self.decode_into(x, &mut bits);
        Ok(self.scale * self.instance.utility_of(&bits))
    }

    pub fn descriptor(&self, instance: InstanceRef) -> ReductionDescriptor {
        ReductionDescriptor {
            instance,
            seed: self.seed,
            scale: self.scale,
            partial: self.partial.clone(),
            d0: self.d0,
            d1: self.d1,
            permutation: self.permutation.clone(),
        }
    }

    /// Rebuilds a function from its descriptor, checking that the seed still
    /// reproduces the recorded permutation.
    pub fn from_descriptor(instance: Arc<ProblemInstance>, desc: &ReductionDescriptor) -> Result<Self> {
        let rf = Self::build(instance, desc.seed, desc.scale, desc.partial.clone(), desc.d0, desc.d1)?;
        if rf.permutation != desc.permutation {
            return Err(contract("descriptor permutation does not match its seed"));
        }
        Ok(rf)
    }
}

/// Where an instance came from, so a descriptor can be re-attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRef {
    pub path: String,
    pub format: String,
    pub problem: String,
    /// Hex SHA-256 of the instance file contents.
    pub sha256: String,
}

/// Canonical serialized form of a reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionDescriptor {
    pub instance: InstanceRef,
    pub seed: u64,
    pub scale: f64,
    pub partial: PartialAssignment,
    pub d0: u64,
    pub d1: u64,
    pub permutation: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate, Graph, ProblemKind};

    fn triangle() -> Arc<ProblemInstance> {
        let g = Graph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        Arc::new(ProblemInstance::graph(ProblemKind::MaxClique, g).unwrap())
    }

    fn or_clause() -> Arc<ProblemInstance> {
        Arc::new(ProblemInstance::max_sat(2, vec![vec![1, 2]]).unwrap())
    }

    /// Literal interval halving, kept independent of the bit arithmetic.
    fn halving_oracle(rf: &ReducedFunction, x: u64) -> Vec<bool> {
        let n = rf.instance().variable_count();
        let mut bits = vec![false; n];
        for (v, b) in rf.partial().iter() {
            bits[v] = b;
        }
        let (mut lo, mut hi) = rf.bounds();
        let mut depth = 0;
        while lo != hi {
            let mid = lo + (hi - lo) / 2;
            let second = x > mid;
            bits[rf.permutation()[depth]] = second;
            if second {
                lo = mid + 1;
            } else {
                hi = mid;
            }
            depth += 1;
        }
        bits
    }

    #[test]
    fn build_domains() {
        assert!(ReducedFunction::build(triangle(), 7, 1.0, PartialAssignment::new(), 1, 8).is_ok());
        let p = PartialAssignment::new().with(0, true);
        assert!(ReducedFunction::build(triangle(), 7, 1.0, p, 1, 4).is_ok());
        let err = ReducedFunction::build(triangle(), 7, 1.0, PartialAssignment::new(), 1, 6);
        assert!(matches!(err, Err(Error::Contract(_))));
        assert!(ReducedFunction::build(triangle(), 7, 0.0, PartialAssignment::new(), 1, 8).is_err());
        assert!(ReducedFunction::build(triangle(), 7, 1.0, PartialAssignment::new(), 0, 7).is_err());
    }

    #[test]
    fn decode_identity_order() {
        let rf = ReducedFunction::with_permutation(or_clause(), vec![0, 1], 1.0, PartialAssignment::new(), 1, 4)
            .unwrap();
        assert_eq!(rf.decode(1).unwrap(), Assignment::from_bits(&[0, 0]));
        assert_eq!(rf.decode(4).unwrap(), Assignment::from_bits(&[1, 1]));
        assert_eq!(rf.decode(3).unwrap(), Assignment::from_bits(&[1, 0]));
        assert!(rf.decode(0).is_err());
        assert!(rf.decode(5).is_err());
    }

    #[test]
    fn eval_points_and_scale() {
        let rf = ReducedFunction::with_permutation(or_clause(), vec![0, 1], 1.0, PartialAssignment::new(), 1, 4)
            .unwrap();
        assert_eq!(rf.eval(1).unwrap(), 0.0);
        assert_eq!(rf.eval(4).unwrap(), 1.0);
        let scaled =
            ReducedFunction::with_permutation(or_clause(), vec![0, 1], 2.0, PartialAssignment::new(), 1, 4)
                .unwrap();
        assert_eq!(scaled.eval(4).unwrap(), 2.0);
    }

    #[test]
    fn bit_extraction_matches_halving() {
        let inst = Arc::new(generate::random_cnf(7, 20, 3, 1).unwrap());
        for seed in 0..5 {
            let partial = PartialAssignment::new().with(2, true);
            let rf = ReducedFunction::build(inst.clone(), seed, 1.0, partial, 10, 10 + 63).unwrap();
            for x in 10..=73 {
                assert_eq!(rf.decode(x).unwrap().bits(), halving_oracle(&rf, x).as_slice());
            }
        }
    }

    #[test]
    fn encode_inverts_decode() {
        let rf = ReducedFunction::build(triangle(), 3, 1.0, PartialAssignment::new(), 5, 12).unwrap();
        for x in 5..=12 {
            assert_eq!(rf.encode(&rf.decode(x).unwrap()).unwrap(), x);
        }
    }

    #[test]
    fn resample_is_deterministic_and_scales() {
        let rf = ReducedFunction::build(triangle(), 0, 1.0, PartialAssignment::new(), 1, 8).unwrap();
        let a = rf.resample(1, 1.0).unwrap();
        let b = rf.resample(1, 1.0).unwrap();
        assert_eq!(a.permutation(), b.permutation());
        let c = rf.resample(1, 3.0).unwrap();
        for x in 1..=8 {
            assert_eq!(c.eval(x).unwrap(), 3.0 * a.eval(x).unwrap());
        }
    }

    #[test]
    fn resample_covers_both_orders_of_two_variables() {
        let rf = ReducedFunction::build(or_clause(), 0, 1.0, PartialAssignment::new(), 1, 4).unwrap();
        let orders: std::collections::BTreeSet<Vec<usize>> =
            (0..32).map(|s| rf.resample(s, 1.0).unwrap().permutation().to_vec()).collect();
        assert_eq!(orders.len(), 2);
    }

    #[test]
    fn descriptor_round_trip() {
        let rf = ReducedFunction::build(triangle(), 9, 1.5, PartialAssignment::new(), 1, 8).unwrap();
        let r = InstanceRef { path: "t".into(), format: "graph".into(), problem: "max-clique".into(), sha256: "0".into() };
        let desc = rf.descriptor(r);
        let back = ReducedFunction::from_descriptor(triangle(), &desc).unwrap();
        assert_eq!(back.permutation(), rf.permutation());
        let mut tampered = desc.clone();
        tampered.permutation.reverse();
        if tampered.permutation != desc.permutation {
            assert!(ReducedFunction::from_descriptor(triangle(), &tampered).is_err());
        }
    }
}
