//! Combinatorial instances over binary decision variables.
//!
//! Three problem kinds are supported: maximum clique, maximum satisfiability
//! and minimum vertex cover. Every instance exposes two views of an
//! assignment:
//!
//! * [`ProblemInstance::evaluate`]: the raw objective (clique size, satisfied
//!   clauses, cover size) including the infeasibility conventions;
//! * [`ProblemInstance::utility`]: the same value in maximization form, which
//!   is what the reduction and the search optimise. For the minimization kind
//!   it is `(n + 1) - objective`: negation shifted so utilities stay
//!   non-negative.

mod dimacs;
pub mod generate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

pub use dimacs::{parse_cnf, parse_graph};

/// Enumeration refuses instances with more variables than this.
pub const BRUTE_FORCE_LIMIT: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    MaxClique,
    MaxSat,
    MinVertexCover,
}

impl ProblemKind {
    pub fn direction(self) -> Direction {
        match self {
            ProblemKind::MaxClique | ProblemKind::MaxSat => Direction::Maximize,
            ProblemKind::MinVertexCover => Direction::Minimize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// A clause as signed 1-based variable indices (DIMACS literals).
pub type Clause = Vec<i32>;

/// Simple undirected graph with a dense adjacency bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    words: usize,
    adjacency: Vec<u64>,
}

impl Graph {
    /// Builds a graph on `n` vertices from 0-based edges. Duplicate edges
    /// (in either orientation) are dropped; self-loops and out-of-range
    /// endpoints are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let words = n.div_ceil(64).max(1);
        let mut g = Graph { n, edges: Vec::new(), words, adjacency: vec![0; n * words] };
        for (u, v) in edges {
            if u == v {
                return Err(Error::Validation(format!("self-loop on vertex {}", u + 1)));
            }
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) references a vertex outside 1..={n}",
                    u + 1,
                    v + 1
                )));
            }
            if !g.adjacent(u, v) {
                g.set(u, v);
                g.set(v, u);
                g.edges.push((u.min(v), u.max(v)));
            }
        }
        Ok(g)
    }

    fn set(&mut self, u: usize, v: usize) {
        self.adjacency[u * self.words + v / 64] |= 1 << (v % 64);
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.adjacency[u * self.words + v / 64] & (1 << (v % 64)) != 0
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Graph(Graph),
    Cnf(Vec<Clause>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    kind: ProblemKind,
    variables: Vec<String>,
    payload: Payload,
}

impl ProblemInstance {
    /// Graph-backed instance (max clique or min vertex cover) with vertices
    /// `1..=n` as variables.
    pub fn graph(kind: ProblemKind, graph: Graph) -> Result<Self> {
        if kind == ProblemKind::MaxSat {
            return Err(contract("max-sat instances need a CNF payload"));
        }
        if graph.n == 0 {
            return Err(Error::Validation("instance needs at least one variable".into()));
        }
        let variables = (1..=graph.n).map(|i| i.to_string()).collect();
        Ok(ProblemInstance { kind, variables, payload: Payload::Graph(graph) })
    }

    pub fn max_sat(n: usize, clauses: Vec<Clause>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("instance needs at least one variable".into()));
        }
        for (i, clause) in clauses.iter().enumerate() {
            if clause.is_empty() {
                return Err(Error::Validation(format!("clause {} is empty", i + 1)));
            }
            if let Some(&lit) = clause.iter().find(|&&l| l == 0 || l.unsigned_abs() as usize > n) {
                return Err(Error::Validation(format!(
                    "clause {} has literal {lit} outside 1..={n}",
                    i + 1
                )));
            }
        }
        let variables = (1..=n).map(|i| i.to_string()).collect();
        Ok(ProblemInstance { kind: ProblemKind::MaxSat, variables, payload: Payload::Cnf(clauses) })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn direction(&self) -> Direction {
        self.kind.direction()
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    /// Raw objective value of `a`.
    ///
    /// Max-SAT counts satisfied clauses. Max clique returns the number of
    /// selected vertices when they form a clique and 0 otherwise. Min vertex
    /// cover returns the number of selected vertices when they cover every
    /// edge and `n + 1` otherwise.
    pub fn evaluate(&self, a: &Assignment) -> Result<f64> {
        self.check_len(a)?;
        Ok(self.objective_of(a.bits()))
    }

    /// Maximization-form value of `a` (see the module docs).
    pub fn utility(&self, a: &Assignment) -> Result<f64> {
        self.check_len(a)?;
        Ok(self.utility_of(a.bits()))
    }

    /// Largest utility any assignment can reach; the `b` in value-range based
    /// concentration bounds.
    pub fn utility_upper_bound(&self) -> f64 {
        let n = self.variable_count() as f64;
        match &self.payload {
            Payload::Cnf(clauses) => clauses.len() as f64,
            Payload::Graph(_) => match self.kind.direction() {
                Direction::Maximize => n,
                Direction::Minimize => n + 1.0,
            },
        }
    }

    /// Converts a raw objective into utility.
    pub fn to_utility(&self, objective: f64) -> f64 {
        match self.kind.direction() {
            Direction::Maximize => objective,
            Direction::Minimize => (self.variable_count() + 1) as f64 - objective,
        }
    }

    /// Converts a utility back into the raw objective.
    pub fn to_objective(&self, utility: f64) -> f64 {
        match self.kind.direction() {
            Direction::Maximize => utility,
            Direction::Minimize => (self.variable_count() + 1) as f64 - utility,
        }
    }

    fn check_len(&self, a: &Assignment) -> Result<()> {
        if a.len() != self.variable_count() {
            return Err(contract(format!(
                "assignment has {} bits, instance has {} variables",
                a.len(),
                self.variable_count()
            )));
        }
        Ok(())
    }

    pub(crate) fn utility_of(&self, bits: &[bool]) -> f64 {
        self.to_utility(self.objective_of(bits))
    }

    pub(crate) fn objective_of(&self, bits: &[bool]) -> f64 {
        debug_assert_eq!(bits.len(), self.variable_count());
        match &self.payload {
            Payload::Cnf(clauses) => clauses
                .iter()
                .filter(|clause| {
                    clause.iter().any(|&lit| {
                        let value = bits[lit.unsigned_abs() as usize - 1];
                        if lit > 0 {
                            value
                        } else {
                            !value
                        }
                    })
                })
                .count() as f64,
            Payload::Graph(g) => match self.kind {
                ProblemKind::MaxClique => {
                    let selected: Vec<usize> = (0..g.n).filter(|&i| bits[i]).collect();
                    let is_clique = selected.iter().enumerate().all(|(i, &u)| {
                        selected[i + 1..].iter().all(|&v| g.adjacent(u, v))
                    });
                    if is_clique {
                        selected.len() as f64
                    } else {
                        0.0
                    }
                }
                ProblemKind::MinVertexCover => {
                    if g.edges.iter().all(|&(u, v)| bits[u] || bits[v]) {
                        bits.iter().filter(|&&b| b).count() as f64
                    } else {
                        (g.n + 1) as f64
                    }
                }
                ProblemKind::MaxSat => unreachable!("graph payload with max-sat kind"),
            },
        }
    }

    /// Exhaustive optimum over all `2^n` assignments.
    ///
    /// Assignments are scanned in lexicographic order of their bit vectors
    /// (variable 1 most significant), and only a strictly better utility
    /// replaces the incumbent, so the witness is the lexicographically
    /// smallest optimal assignment. `epsilon` sets the utility slack used
    /// when counting near-optimal assignments.
    pub fn brute_force_optimum(&self, epsilon: f64) -> Result<Optimum> {
        let n = self.variable_count();
        if n > BRUTE_FORCE_LIMIT {
            return Err(Error::TooLarge { n, limit: BRUTE_FORCE_LIMIT });
        }
        if !(epsilon >= 0.0) {
            return Err(contract("epsilon must be non-negative"));
        }
        let mut bits = vec![false; n];
        let mut utilities = Vec::with_capacity(1 << n);
        let mut best = f64::NEG_INFINITY;
        let mut best_mask = 0u64;
        for mask in 0..(1u64 << n) {
            fill_bits(mask, &mut bits);
            let u = self.utility_of(&bits);
            if u > best {
                best = u;
                best_mask = mask;
            }
            utilities.push(u);
        }
        let near = utilities.iter().filter(|&&u| u >= best - epsilon).count() as u64;
        fill_bits(best_mask, &mut bits);
        Ok(Optimum {
            value: self.to_objective(best),
            utility: best,
            witness: Assignment::new(bits),
            epsilon,
            epsilon_optimal_count: near,
        })
    }
}

/// Writes `mask` into `bits` with bit `n-1` of the mask as variable 0.
fn fill_bits(mask: u64, bits: &mut [bool]) {
    let n = bits.len();
    for (i, b) in bits.iter_mut().enumerate() {
        *b = (mask >> (n - 1 - i)) & 1 == 1;
    }
}

/// Result of an exhaustive scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    /// Raw objective of the witness.
    pub value: f64,
    pub utility: f64,
    pub witness: Assignment,
    pub epsilon: f64,
    /// Assignments whose utility is within `epsilon` of the optimum.
    pub epsilon_optimal_count: u64,
}

/// Values of the instance's variables in declared order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn new(bits: Vec<bool>) -> Self {
        Assignment(bits)
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Assignment(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for Assignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Assignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(serde::de::Error::custom(format!("invalid bit {other:?}"))),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Assignment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> ProblemInstance {
        let g = Graph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        ProblemInstance::graph(ProblemKind::MaxClique, g).unwrap()
    }

    #[test]
    fn triangle_values() {
        let t = triangle();
        assert_eq!(t.evaluate(&Assignment::from_bits(&[1, 1, 1])).unwrap(), 3.0);
        assert_eq!(t.evaluate(&Assignment::from_bits(&[0, 0, 0])).unwrap(), 0.0);
    }

    #[test]
    fn non_clique_scores_zero() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        let inst = ProblemInstance::graph(ProblemKind::MaxClique, g).unwrap();
        assert_eq!(inst.evaluate(&Assignment::from_bits(&[1, 0, 1])).unwrap(), 0.0);
        assert_eq!(inst.evaluate(&Assignment::from_bits(&[1, 1, 0])).unwrap(), 2.0);
    }

    #[test]
    fn cnf_value() {
        let inst = ProblemInstance::max_sat(2, vec![vec![1, 2]]).unwrap();
        assert_eq!(inst.evaluate(&Assignment::from_bits(&[1, 0])).unwrap(), 1.0);
        assert_eq!(inst.evaluate(&Assignment::from_bits(&[0, 0])).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = triangle().evaluate(&Assignment::from_bits(&[1, 1])).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn vertex_cover_penalty_and_utility() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        let inst = ProblemInstance::graph(ProblemKind::MinVertexCover, g).unwrap();
        let uncovered = Assignment::from_bits(&[1, 0, 0]);
        assert_eq!(inst.evaluate(&uncovered).unwrap(), 4.0);
        assert_eq!(inst.utility(&uncovered).unwrap(), 0.0);
        let cover = Assignment::from_bits(&[0, 1, 0]);
        assert_eq!(inst.evaluate(&cover).unwrap(), 1.0);
        assert_eq!(inst.utility(&cover).unwrap(), 3.0);
        let opt = inst.brute_force_optimum(0.0).unwrap();
        assert_eq!(opt.value, 1.0);
        assert_eq!(opt.witness, cover);
    }

    #[test]
    fn brute_force_triangle() {
        let opt = triangle().brute_force_optimum(0.0).unwrap();
        assert_eq!(opt.value, 3.0);
        assert_eq!(opt.witness, Assignment::from_bits(&[1, 1, 1]));
        assert_eq!(opt.epsilon_optimal_count, 1);
    }

    #[test]
    fn brute_force_edgeless_tie_break() {
        let g = Graph::new(2, []).unwrap();
        let inst = ProblemInstance::graph(ProblemKind::MaxClique, g).unwrap();
        let opt = inst.brute_force_optimum(0.0).unwrap();
        assert_eq!(opt.value, 1.0);
        assert_eq!(opt.witness, Assignment::from_bits(&[0, 1]));
        assert_eq!(opt.epsilon_optimal_count, 2);
    }

    #[test]
    fn brute_force_single_clause() {
        let inst = ProblemInstance::max_sat(3, vec![vec![1]]).unwrap();
        let opt = inst.brute_force_optimum(0.0).unwrap();
        assert_eq!(opt.value, 1.0);
        assert!(opt.witness.bits()[0]);
        // Every assignment with x1 set is optimal.
        assert_eq!(opt.epsilon_optimal_count, 4);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let g = Graph::new(27, []).unwrap();
        let inst = ProblemInstance::graph(ProblemKind::MaxClique, g).unwrap();
        assert!(matches!(inst.brute_force_optimum(0.0), Err(Error::TooLarge { n: 27, .. })));
    }

    #[test]
    fn graph_rejects_self_loops_and_dedups() {
        assert!(matches!(Graph::new(2, [(1, 1)]), Err(Error::Validation(_))));
        let g = Graph::new(2, [(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn cnf_validation() {
        assert!(ProblemInstance::max_sat(1, vec![vec![]]).is_err());
        assert!(ProblemInstance::max_sat(1, vec![vec![2]]).is_err());
        assert!(ProblemInstance::max_sat(0, vec![]).is_err());
    }

    #[test]
    fn assignment_serde_round_trip() {
        let a = Assignment::from_bits(&[0, 1, 1]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "\"011\"");
        assert_eq!(serde_json::from_str::<Assignment>(&json).unwrap(), a);
    }
}
