//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use hitlbo_core::problems::generate::random_graph;
use hitlbo_core::{PartialAssignment, ProblemInstance, ProblemKind, ReducedFunction};

pub fn clique(n: usize, seed: u64) -> Arc<ProblemInstance> {
    Arc::new(random_graph(ProblemKind::MaxClique, n, 0.5, seed).expect("valid graph parameters"))
}

/// Full-domain reduction of `instance`.
pub fn reduced(instance: Arc<ProblemInstance>, seed: u64) -> ReducedFunction {
    let d1 = 1u64 << instance.variable_count();
    ReducedFunction::build(instance, seed, 1.0, PartialAssignment::new(), 1, d1).expect("domain fits")
}
