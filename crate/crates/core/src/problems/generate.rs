//! Seeded random instance generators for experiments and tests.

use super::{Graph, ProblemInstance, ProblemKind};
use crate::error::{contract, Result};
use crate::rng::{below, seeded, unit};

/// Erdős–Rényi graph `G(n, p)` wrapped as an instance of `kind`.
pub fn random_graph(kind: ProblemKind, n: usize, p: f64, seed: u64) -> Result<ProblemInstance> {
    if !(0.0..=1.0).contains(&p) {
        return Err(contract("edge probability must lie in [0, 1]"));
    }
    let mut rng = seeded(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if unit(&mut rng) < p {
                edges.push((u, v));
            }
        }
    }
    ProblemInstance::graph(kind, Graph::new(n, edges)?)
}

/// Random CNF with `clauses` clauses of `width` distinct variables each
/// (width is capped at `n`), each literal negated with probability 1/2.
pub fn random_cnf(n: usize, clauses: usize, width: usize, seed: u64) -> Result<ProblemInstance> {
    if width == 0 {
        return Err(contract("clause width must be positive"));
    }
    let width = width.min(n);
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(clauses);
    for _ in 0..clauses {
        let mut clause: Vec<i32> = Vec::with_capacity(width);
        while clause.len() < width {
            let var = below(&mut rng, n as u64) as i32 + 1;
            if clause.iter().any(|l: &i32| l.abs() == var) {
                continue;
            }
            let negate = below(&mut rng, 2) == 1;
            clause.push(if negate { -var } else { var });
        }
        out.push(clause);
    }
    ProblemInstance::max_sat(n, out)
}
