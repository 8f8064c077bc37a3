//! Human-in-the-loop Bayesian optimization over finite integer domains.
//!
//! A combinatorial instance ([`problems`]) is encoded as a univariate
//! black-box function on `{d0..d1}` by recursive halving ([`reduction`]).
//! The [`search`] driver partitions that domain into power-of-two cells,
//! re-samples each cell under fresh variable orderings, asks an [`expert`]
//! for a Gaussian-process prior per re-sample, runs Bayesian optimization
//! ([`bo`]) with that prior, and always expands the cell with the highest
//! upper bound. [`concentration`] and [`bo::bounds`] hold the closed-form
//! calculators that go with it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bo;
pub mod concentration;
pub mod error;
pub mod expert;
pub mod gp;
pub mod problems;
pub mod reduction;
pub mod rng;
pub mod search;
pub mod suites;

pub use bo::{run_bo, Acquisition, BoConfig, BoRunResult, Evaluation};
pub use error::{Error, Result};
pub use expert::{
    ConsistencyLedger, Expert, ExpertError, ExpertQuery, ExpertQueue, ExpertResponse, MleExpert,
    RemoteExpert, SimulatedExpert,
};
pub use gp::{Kernel, ObservationSet, PriorSpec};
pub use problems::{Assignment, Direction, ProblemInstance, ProblemKind};
pub use reduction::{PartialAssignment, ReducedFunction};
pub use search::{Cell, CellStatus, SearchConfig, SearchResult, SearchRun};
