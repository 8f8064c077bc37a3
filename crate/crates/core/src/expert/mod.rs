//! Prior-providing experts.
//!
//! The search driver sends an [`ExpertQuery`] for every re-sample of a cell
//! and gets back an [`ExpertResponse`] carrying a [`PriorSpec`]. Three
//! experts are provided: a [`SimulatedExpert`] that always returns a
//! configured ground truth, an [`MleExpert`] that fits hyperparameters to the
//! run's own evaluations, and a [`RemoteExpert`] that parks the query on an
//! [`ExpertQueue`] for a human to answer.
//!
//! Every released response has to pass the run's [`ConsistencyLedger`]:
//! priors for overlapping regions may not contradict each other.

mod ledger;
mod mle;
mod queue;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{ObservationSet, PriorSpec};

pub use ledger::{ConsistencyLedger, Contradiction, LedgerEntry, DEFAULT_TOLERANCE};
pub use mle::MleExpert;
pub use queue::{ExpertQueue, PendingQuery, PendingToken, RemoteExpert, RespondError};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ExpertError {
    #[error("no response to query {query_id} within {waited_ms} ms")]
    Timeout { query_id: String, waited_ms: u64 },
    #[error("prior contradicts an earlier one: {0}")]
    Contradiction(String),
    #[error("unknown query id {0}")]
    UnknownQuery(String),
    #[error("run {run_id} already has query {pending} outstanding")]
    Busy { run_id: String, pending: String },
    #[error("expert unavailable: {0}")]
    Unavailable(String),
}

/// Summary of the evaluations a run already holds inside a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub count: u64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

impl CellStats {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut count, mut min, mut max, mut sum) = (0u64, f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values {
            count += 1;
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        if count == 0 {
            return CellStats { count, min: None, max: None, mean: None };
        }
        CellStats { count, min: Some(min), max: Some(max), mean: Some(sum / count as f64) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertQuery {
    pub query_id: String,
    pub run_id: String,
    pub lo: u64,
    pub hi: u64,
    pub size: u64,
    /// Fixed-order prefix of the cell, e.g. `"v1=0 v2=1"`; empty at the root.
    pub prefix: String,
    pub stats: CellStats,
    /// Bounds of the paired cell from the same expansion.
    pub sibling: Option<(u64, u64)>,
    pub sample_index: u32,
    pub deadline_hint_secs: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertResponse {
    pub query_id: String,
    pub prior: PriorSpec,
    #[serde(default)]
    pub annotation: String,
}

/// What the driver knows when it asks.
pub struct QueryContext<'a> {
    /// Evaluations recorded inside the queried cell, in cell-local
    /// coordinates (`x - lo + 1`).
    pub history: &'a ObservationSet,
    /// Priors already accepted for this run.
    pub ledger: &'a ConsistencyLedger,
}

pub trait Expert {
    fn respond(&mut self, query: &ExpertQuery, ctx: &QueryContext<'_>) -> Result<ExpertResponse, ExpertError>;
}

impl<E: Expert + ?Sized> Expert for Box<E> {
    fn respond(&mut self, query: &ExpertQuery, ctx: &QueryContext<'_>) -> Result<ExpertResponse, ExpertError> {
        (**self).respond(query, ctx)
    }
}

/// Answers every query with the same ground-truth prior.
#[derive(Debug, Clone)]
pub struct SimulatedExpert {
    truth: PriorSpec,
}

impl SimulatedExpert {
    pub fn new(truth: PriorSpec) -> Self {
        SimulatedExpert { truth }
    }
}

impl Expert for SimulatedExpert {
    fn respond(&mut self, query: &ExpertQuery, _ctx: &QueryContext<'_>) -> Result<ExpertResponse, ExpertError> {
        Ok(ExpertResponse {
            query_id: query.query_id.clone(),
            prior: self.truth,
            annotation: "simulated".into(),
        })
    }
}

#[cfg(test)]
pub(crate) fn test_query(id: &str, lo: u64, hi: u64) -> ExpertQuery {
    ExpertQuery {
        query_id: id.into(),
        run_id: "run".into(),
        lo,
        hi,
        size: hi - lo + 1,
        prefix: String::new(),
        stats: CellStats::from_values([]),
        sibling: None,
        sample_index: 0,
        deadline_hint_secs: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulated_expert_is_constant_and_consistent() {
        let truth = PriorSpec::wiener(1.0).unwrap();
        let mut expert = SimulatedExpert::new(truth);
        let mut ledger = ConsistencyLedger::new(DEFAULT_TOLERANCE);
        let history = ObservationSet::new();
        let mut violations = 0;
        for i in 0..100u64 {
            let (lo, hi) = if i % 2 == 0 { (1, 512) } else { (513, 1024) };
            let q = test_query(&format!("q{i}"), lo, hi);
            let r = expert.respond(&q, &QueryContext { history: &history, ledger: &ledger }).unwrap();
            assert_eq!(r.prior, truth);
            assert_eq!(r.query_id, q.query_id);
            if ledger.admit(lo, hi, &r.prior).is_err() {
                violations += 1;
            }
        }
        assert_eq!(violations, 0);
        assert_eq!(ledger.entries().len(), 100);
    }

    #[test]
    fn cell_stats() {
        let s = CellStats::from_values([1.0, 3.0, 2.0]);
        assert_eq!((s.count, s.min, s.max, s.mean), (3, Some(1.0), Some(3.0), Some(2.0)));
        assert_eq!(CellStats::from_values([]).mean, None);
    }
}
