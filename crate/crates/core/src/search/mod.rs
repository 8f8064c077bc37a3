//! Cell-tree search over a reduced domain with expert-supplied priors.
//!
//! The root cell is the whole domain `{1..2^n}` under the instance's own
//! variable order. Each expansion splits the selected cell in two and
//! assesses both halves: `S` times, the half is re-encoded with a fresh
//! random order of its free variables, the expert provides a prior, and a
//! Bayesian-optimization run with `min(X, size)` evaluations records its best
//! value. The mean of those maxima is the cell's `val`, inflated into `ub`.
//! Halves with fewer than four points are enumerated once instead.
//!
//! The search stops when the expansion budget is spent, no cell can be
//! expanded, or every open cell is dominated by the incumbent.
//!
//! [`SearchRun`] holds the whole state and advances one unit of work per
//! [`step`](SearchRun::step). An expert failure leaves the state untouched,
//! so after a timeout the same call can simply be retried, even after a
//! round trip through serde.

mod cell;

use std::collections::BTreeMap;
use std::sync::Arc;

use log::{debug, info};
use serde::{Deserialize, Serialize};

pub use cell::{expand, select_cell, Cell, CellStatus};

use crate::bo::bounds::{cell_ub, dominance_factor};
use crate::bo::{run_bo, Acquisition, BoConfig};
use crate::error::{contract, Error, Result};
use crate::expert::{CellStats, ConsistencyLedger, Expert, ExpertError, ExpertQuery, QueryContext};
use crate::gp::ObservationSet;
use crate::problems::{Assignment, ProblemInstance, ProblemKind};
use crate::reduction::ReducedFunction;
use crate::rng::derive_seed;

/// Largest instance the search accepts.
pub const MAX_SEARCH_VARIABLES: usize = 40;

/// Cells smaller than this are enumerated rather than optimised.
pub const ENUMERATION_LIMIT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Re-samples per assessed cell.
    pub s: u32,
    /// Optimiser budget per re-sample.
    pub x: u64,
    pub max_expansions: u32,
    /// Slack allowed by the dominance stop.
    pub epsilon: f64,
    #[serde(default)]
    pub acquisition: Acquisition,
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_hint_secs: Option<u64>,
}

fn default_scale() -> f64 {
    1.0
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            s: 4,
            x: 32,
            max_expansions: 10,
            epsilon: 0.0,
            acquisition: Acquisition::default(),
            seed: 0,
            scale: 1.0,
            deadline_hint_secs: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(contract("S must be at least 1"));
        }
        // ub divides by sqrt(log2 X), which vanishes at X = 1.
        if self.x < 2 {
            return Err(contract("X must be at least 2"));
        }
        if self.max_expansions == 0 {
            return Err(contract("max_expansions must be at least 1"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(contract("epsilon must be a non-negative number"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(contract("scale must be positive and finite"));
        }
        Ok(())
    }

    /// Evaluations spent assessing a cell of `size` points.
    pub fn cell_cost(&self, size: u64) -> u64 {
        if size < ENUMERATION_LIMIT {
            size
        } else {
            self.s as u64 * self.x.min(size)
        }
    }

    /// A cell is assessed exhaustively when it is enumerated or every
    /// re-sample's budget covers it.
    pub fn is_exhaustive(&self, size: u64) -> bool {
        size < ENUMERATION_LIMIT || self.x >= size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxExpansions,
    Exhausted,
    Dominated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub step: u32,
    pub cell: u64,
    pub lo: u64,
    pub hi: u64,
    pub depth: u32,
    /// `None` for the unassessed root.
    pub ub: Option<f64>,
    /// Incumbent when the expansion was chosen.
    pub best_before: Option<f64>,
    pub children: [u64; 2],
}

/// One objective evaluation, as written to the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub cell: u64,
    pub lo: u64,
    pub hi: u64,
    pub sample: u32,
    pub iteration: u32,
    pub point: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub value: f64,
    /// Point under the fixed variable order.
    pub point: u64,
    pub assignment: Assignment,
}

/// How close the run got to certifying its incumbent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCertificate {
    pub epsilon: f64,
    /// Dominance factor at `T = X`; absent where it is undefined.
    pub factor: Option<f64>,
    /// Largest `ub` among cells still open.
    pub max_open_ub: Option<f64>,
    /// `max_open_ub * factor - best`; the incumbent is certified when this
    /// is at most `epsilon`.
    pub slack: Option<f64>,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub run_id: String,
    pub best_value: f64,
    pub best_objective: f64,
    pub best_point: u64,
    pub best_assignment: Assignment,
    pub expansion_trace: Vec<ExpansionRecord>,
    pub total_evaluations: u64,
    pub expert_queries: u64,
    pub stop_reason: Option<StopReason>,
    pub epsilon_certificate: EpsilonCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Work {
    children: [u64; 2],
    child: usize,
    sample: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchRun {
    run_id: String,
    cfg: SearchConfig,
    kind: ProblemKind,
    variables: usize,
    #[serde(skip)]
    instance: Option<Arc<ProblemInstance>>,
    cells: Vec<Cell>,
    expansions: Vec<ExpansionRecord>,
    work: Option<Work>,
    best: Option<Incumbent>,
    ledger: ConsistencyLedger,
    expert_queries: u64,
    evaluations: Vec<EvalRecord>,
    stop: Option<StopReason>,
    /// Latest value seen at each point, rebuilt from `evaluations`.
    #[serde(skip)]
    history: BTreeMap<u64, f64>,
}

fn fixed_order_point(a: &Assignment) -> u64 {
    1 + a.bits().iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
}

impl SearchRun {
    pub fn new(run_id: impl Into<String>, instance: Arc<ProblemInstance>, cfg: SearchConfig) -> Result<Self> {
        Self::with_ledger(run_id, instance, cfg, ConsistencyLedger::default())
    }

    pub fn with_ledger(
        run_id: impl Into<String>,
        instance: Arc<ProblemInstance>,
        cfg: SearchConfig,
        ledger: ConsistencyLedger,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = instance.variable_count();
        if n > MAX_SEARCH_VARIABLES {
            return Err(Error::TooLarge { n, limit: MAX_SEARCH_VARIABLES });
        }
        Ok(SearchRun {
            run_id: run_id.into(),
            cfg,
            kind: instance.kind(),
            variables: n,
            instance: Some(instance),
            cells: Vec::new(),
            expansions: Vec::new(),
            work: None,
            best: None,
            ledger,
            expert_queries: 0,
            evaluations: Vec::new(),
            stop: None,
            history: BTreeMap::new(),
        })
    }

    /// Re-attaches the instance after deserialisation.
    pub fn attach(&mut self, instance: Arc<ProblemInstance>) -> Result<()> {
        if instance.kind() != self.kind || instance.variable_count() != self.variables {
            return Err(contract("instance does not match the saved run"));
        }
        self.instance = Some(instance);
        self.history = self.evaluations.iter().map(|e| (e.point, e.value)).collect();
        Ok(())
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn evaluations(&self) -> &[EvalRecord] {
        &self.evaluations
    }

    pub fn ledger(&self) -> &ConsistencyLedger {
        &self.ledger
    }

    pub fn best(&self) -> Option<&Incumbent> {
        self.best.as_ref()
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn is_finished(&self) -> bool {
        self.stop.is_some()
    }

    fn instance(&self) -> Result<Arc<ProblemInstance>> {
        self.instance.clone().ok_or_else(|| contract("run has no instance attached"))
    }

    fn cell_index(&self, id: u64) -> usize {
        self.cells.iter().position(|c| c.id == id).expect("cell ids are dense")
    }

    /// Runs to completion. An expert failure is returned as
    /// [`Error::Expert`] and leaves the run resumable.
    pub fn run(&mut self, expert: &mut dyn Expert) -> Result<SearchResult> {
        while !self.step(expert)? {}
        Ok(self.result().expect("a finished run has an incumbent"))
    }

    /// Advances by one unit of work: one re-sample, one enumeration, or one
    /// selection. Returns true once the run has stopped.
    pub fn step(&mut self, expert: &mut dyn Expert) -> Result<bool> {
        if self.stop.is_some() {
            return Ok(true);
        }
        if self.cells.is_empty() {
            self.start()?;
            return Ok(self.stop.is_some());
        }
        if let Some(work) = self.work.clone() {
            self.advance(work, expert)?;
            return Ok(false);
        }
        if let Some(reason) = self.stopping() {
            info!("run {} stops: {reason:?}", self.run_id);
            self.stop = Some(reason);
            return Ok(true);
        }
        let id = select_cell(&self.cells).map(|c| c.id).expect("stopping() covers exhaustion");
        self.expand_cell(id)?;
        Ok(false)
    }

    fn start(&mut self) -> Result<()> {
        let size = 1u64 << self.variables;
        self.cells.push(Cell::root(size));
        if size < ENUMERATION_LIMIT {
            self.enumerate(0)?;
            self.stop = Some(StopReason::Exhausted);
        }
        Ok(())
    }

    fn stopping(&self) -> Option<StopReason> {
        if self.expansions.len() >= self.cfg.max_expansions as usize {
            return Some(StopReason::MaxExpansions);
        }
        if select_cell(&self.cells).is_none() {
            return Some(StopReason::Exhausted);
        }
        let cert = self.certificate();
        if cert.certified {
            return Some(StopReason::Dominated);
        }
        None
    }

    fn certificate(&self) -> EpsilonCertificate {
        let factor = dominance_factor(self.cfg.x as f64).ok();
        let max_open_ub = self
            .cells
            .iter()
            .filter(|c| c.status == CellStatus::Active && c.size() >= 2)
            .map(|c| c.ub.unwrap_or(f64::INFINITY))
            .reduce(f64::max);
        let best = self.best.as_ref().map(|b| b.value);
        let slack = match (factor, best) {
            (Some(f), Some(best)) => Some(max_open_ub.map_or(f64::NEG_INFINITY, |ub| ub * f) - best),
            _ => None,
        };
        EpsilonCertificate {
            epsilon: self.cfg.epsilon,
            factor,
            max_open_ub,
            slack,
            certified: slack.is_some_and(|s| s <= self.cfg.epsilon),
        }
    }

    fn expand_cell(&mut self, id: u64) -> Result<()> {
        let next = self.cells.len() as u64;
        let i = self.cell_index(id);
        let (a, b) = expand(&mut self.cells[i], (next, next + 1))?;
        let parent = &self.cells[i];
        debug!("run {} expands cell {} {{{}..{}}} ub={:?}", self.run_id, id, parent.lo, parent.hi, parent.ub);
        self.expansions.push(ExpansionRecord {
            step: self.expansions.len() as u32 + 1,
            cell: id,
            lo: parent.lo,
            hi: parent.hi,
            depth: parent.depth,
            ub: parent.ub,
            best_before: self.best.as_ref().map(|b| b.value),
            children: [a.id, b.id],
        });
        self.cells.push(a);
        self.cells.push(b);
        self.work = Some(Work { children: [next, next + 1], child: 0, sample: 0 });
        Ok(())
    }

    fn advance(&mut self, mut work: Work, expert: &mut dyn Expert) -> Result<()> {
        let id = work.children[work.child];
        let i = self.cell_index(id);
        if self.cells[i].size() < ENUMERATION_LIMIT {
            self.enumerate(i)?;
        } else {
            self.resample(i, work.sample, work.children[1 - work.child], expert)?;
            work.sample += 1;
            if work.sample < self.cfg.s {
                self.work = Some(work);
                return Ok(());
            }
            self.finalize(i);
        }
        work.child += 1;
        work.sample = 0;
        self.work = (work.child < 2).then_some(work);
        Ok(())
    }

    fn record(&mut self, i: usize, sample: u32, iteration: u32, point: u64, value: f64) {
        let c = &self.cells[i];
        self.evaluations.push(EvalRecord { cell: c.id, lo: c.lo, hi: c.hi, sample, iteration, point, value });
        self.history.insert(point, value);
    }

    fn offer(&mut self, value: f64, assignment: Assignment) {
        if self.best.as_ref().is_none_or(|b| value > b.value) {
            let point = fixed_order_point(&assignment);
            self.best = Some(Incumbent { value, point, assignment });
        }
    }

    fn enumerate(&mut self, i: usize) -> Result<()> {
        let (lo, hi) = (self.cells[i].lo, self.cells[i].hi);
        let rf = ReducedFunction::build(
            self.instance()?,
            derive_seed(self.cfg.seed, &[lo, hi]),
            self.cfg.scale,
            self.cells[i].prefix.clone(),
            lo,
            hi,
        )?;
        let mut best: Option<(f64, u64)> = None;
        for (k, x) in (lo..=hi).enumerate() {
            let y = rf.eval(x)?;
            self.record(i, 0, k as u32, x, y);
            if best.is_none_or(|(b, _)| y > b) {
                best = Some((y, x));
            }
        }
        let (value, x) = best.expect("cells are non-empty");
        self.offer(value, rf.decode(x)?);
        let c = &mut self.cells[i];
        c.samples = vec![value];
        c.val = Some(value);
        c.ub = Some(value);
        c.status = CellStatus::Exhausted;
        Ok(())
    }

    fn query(&self, i: usize, sample: u32, sibling: u64) -> (ExpertQuery, ObservationSet) {
        let c = &self.cells[i];
        let history: ObservationSet = self.history.range(c.lo..=c.hi).map(|(&x, &y)| (x - c.lo + 1, y)).collect();
        let names = self.instance.as_ref().map(|inst| inst.variables().to_vec()).unwrap_or_default();
        let prefix = c
            .prefix
            .iter()
            .map(|(v, b)| format!("x{}={}", names.get(v).cloned().unwrap_or_else(|| (v + 1).to_string()), u8::from(b)))
            .collect::<Vec<_>>()
            .join(" ");
        let sib = &self.cells[self.cell_index(sibling)];
        let q = ExpertQuery {
            query_id: format!("{}-c{}-s{}", self.run_id, c.id, sample),
            run_id: self.run_id.clone(),
            lo: c.lo,
            hi: c.hi,
            size: c.size(),
            prefix,
            stats: CellStats::from_values(history.values()),
            sibling: Some((sib.lo, sib.hi)),
            sample_index: sample,
            deadline_hint_secs: self.cfg.deadline_hint_secs,
        };
        (q, history)
    }

    fn resample(&mut self, i: usize, sample: u32, sibling: u64, expert: &mut dyn Expert) -> Result<()> {
        let (query, history) = self.query(i, sample, sibling);
        let response = expert.respond(&query, &QueryContext { history: &history, ledger: &self.ledger })?;
        if response.query_id != query.query_id {
            return Err(Error::Expert(ExpertError::UnknownQuery(response.query_id)));
        }
        self.ledger
            .admit(query.lo, query.hi, &response.prior)
            .map_err(|c| Error::Expert(ExpertError::Contradiction(c.to_string())))?;
        self.expert_queries += 1;

        let (lo, hi) = (query.lo, query.hi);
        let rf = ReducedFunction::build(
            self.instance()?,
            derive_seed(self.cfg.seed, &[lo, hi, sample as u64]),
            self.cfg.scale,
            self.cells[i].prefix.clone(),
            lo,
            hi,
        )?;
        let bo = BoConfig {
            budget: self.cfg.x.min(query.size),
            acquisition: self.cfg.acquisition,
            seed: derive_seed(self.cfg.seed, &[lo, hi, sample as u64, 1]),
        };
        let result = run_bo(|x| rf.eval(x).expect("optimiser stays in the domain"), lo, hi, &response.prior, &bo)?;
        for (k, e) in result.trace.iter().enumerate() {
            self.record(i, sample, k as u32, e.point, e.value);
        }
        self.offer(result.best_value, rf.decode(result.best_point)?);
        self.cells[i].samples.push(result.best_value);
        Ok(())
    }

    fn finalize(&mut self, i: usize) {
        let (x, exhaustive) = (self.cfg.x, self.cfg.is_exhaustive(self.cells[i].size()));
        let c = &mut self.cells[i];
        let val = c.samples.iter().sum::<f64>() / c.samples.len() as f64;
        c.val = Some(val);
        c.ub = Some(cell_ub(val, x.min(c.size()), c.size()));
        if exhaustive {
            c.status = CellStatus::Exhausted;
        }
        debug!("cell {} {{{}..{}}} val={val} ub={:?}", c.id, c.lo, c.hi, c.ub);
    }

    /// Current incumbent and trace; `None` before the first evaluation.
    pub fn result(&self) -> Option<SearchResult> {
        let best = self.best.as_ref()?;
        let objective = self.instance.as_ref().map_or(best.value, |inst| inst.to_objective(best.value / self.cfg.scale));
        Some(SearchResult {
            run_id: self.run_id.clone(),
            best_value: best.value,
            best_objective: objective,
            best_point: best.point,
            best_assignment: best.assignment.clone(),
            expansion_trace: self.expansions.clone(),
            total_evaluations: self.evaluations.len() as u64,
            expert_queries: self.expert_queries,
            stop_reason: self.stop,
            epsilon_certificate: self.certificate(),
        })
    }
}

/// Runs a fresh search to completion.
pub fn run_search(
    instance: Arc<ProblemInstance>,
    expert: &mut dyn Expert,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    SearchRun::new("run", instance, cfg.clone())?.run(expert)
}
