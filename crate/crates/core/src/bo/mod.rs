//! Bayesian optimization over a finite integer interval.
//!
//! The loop is noise-free: a point is never evaluated twice, so a budget at
//! least the size of the domain is an exhaustive scan. Acquisition is
//! maximised over the whole interval when it has at most
//! [`CANDIDATE_CAP`] points, otherwise over a fresh seeded uniform subsample
//! of that many unevaluated points per iteration.

pub mod bounds;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{contract, Result};
use crate::gp::{self, Kernel, ObservationSet, PriorSpec, WienerBridge};
use crate::rng::{self, Rng};

pub const CANDIDATE_CAP: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Acquisition {
    /// GP-UCB: `mean + beta * std`.
    Ucb { beta: f64 },
    /// Expected improvement over the incumbent plus `xi`.
    Ei { xi: f64 },
    /// Uniform sampling without replacement.
    Prs,
}

impl Default for Acquisition {
    fn default() -> Self {
        Acquisition::Ucb { beta: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    /// Function evaluations per run.
    pub budget: u64,
    pub acquisition: Acquisition,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub point: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoRunResult {
    pub best_point: u64,
    pub best_value: f64,
    pub trace: Vec<Evaluation>,
    pub evaluations_used: u64,
}

/// Posterior model over cell-local coordinates.
enum Surrogate {
    Wiener(WienerBridge),
    Dense { spec: PriorSpec, obs: ObservationSet },
}

impl Surrogate {
    fn new(prior: &PriorSpec) -> Self {
        match *prior.kernel() {
            Kernel::Wiener { variance } => Surrogate::Wiener(WienerBridge::new(variance, prior.mean())),
            _ => Surrogate::Dense { spec: *prior, obs: ObservationSet::new() },
        }
    }

    fn observe(&mut self, s: u64, y: f64) -> Result<()> {
        match self {
            Surrogate::Wiener(b) => b.observe(s, y),
            Surrogate::Dense { obs, .. } => obs.insert(s, y),
        }
    }

    fn predict(&self, coords: &[u64]) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            Surrogate::Wiener(b) => b.predict_sorted(coords),
            Surrogate::Dense { spec, obs } => {
                let post = gp::posterior(spec, obs, coords)?;
                Ok((post.means, post.variances))
            }
        }
    }
}

/// Points not yet evaluated.
enum Pool {
    /// Every remaining point, ascending.
    Listed(Vec<u64>),
    Sparse { lo: u64, size: u64, seen: HashSet<u64>, scratch: Vec<u64> },
}

impl Pool {
    fn new(lo: u64, hi: u64) -> Self {
        let size = hi - lo + 1;
        if size <= CANDIDATE_CAP {
            Pool::Listed((lo..=hi).collect())
        } else {
            Pool::Sparse { lo, size, seen: HashSet::new(), scratch: Vec::new() }
        }
    }

    /// Unevaluated points to score this iteration, ascending.
    fn candidates(&mut self, rng: &mut Rng) -> &[u64] {
        if let Pool::Sparse { lo, size, seen, .. } = self {
            if *size - seen.len() as u64 <= CANDIDATE_CAP {
                let (lo, hi) = (*lo, *lo + *size - 1);
                *self = Pool::Listed((lo..=hi).filter(|x| !seen.contains(x)).collect());
            }
        }
        match self {
            Pool::Listed(points) => points,
            Pool::Sparse { lo, size, seen, scratch } => {
                let mut picked = HashSet::with_capacity(CANDIDATE_CAP as usize);
                while (picked.len() as u64) < CANDIDATE_CAP {
                    let x = *lo + rng::below(rng, *size);
                    if !seen.contains(&x) {
                        picked.insert(x);
                    }
                }
                scratch.clear();
                scratch.extend(picked);
                scratch.sort_unstable();
                scratch
            }
        }
    }

    fn take(&mut self, x: u64) {
        match self {
            Pool::Listed(points) => {
                if let Ok(i) = points.binary_search(&x) {
                    points.remove(i);
                }
            }
            Pool::Sparse { seen, .. } => {
                seen.insert(x);
            }
        }
    }
}

/// Index of the first maximum; NaN scores never win.
fn argmax(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

fn expected_improvement(mean: f64, var: f64, best: f64, xi: f64, normal: &Normal) -> f64 {
    let gain = mean - best - xi;
    let sd = var.sqrt();
    if sd <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    gain * normal.cdf(z) + sd * normal.pdf(z)
}

/// Maximises `f` over `{lo..=hi}` with at most `cfg.budget` evaluations.
///
/// The prior is placed on cell-local coordinates `x - lo + 1`. The run stops
/// early when the domain is exhausted.
pub fn run_bo<F>(mut f: F, lo: u64, hi: u64, prior: &PriorSpec, cfg: &BoConfig) -> Result<BoRunResult>
where
    F: FnMut(u64) -> f64,
{
    if hi < lo {
        return Err(contract(format!("empty domain {{{lo}..{hi}}}")));
    }
    if cfg.budget == 0 {
        return Err(contract("budget must be at least 1"));
    }
    match cfg.acquisition {
        Acquisition::Ucb { beta } if !(beta > 0.0) => return Err(contract("UCB beta must be positive")),
        Acquisition::Ei { xi } if !(xi >= 0.0) => return Err(contract("EI xi must be non-negative")),
        _ => {}
    }
    let size = hi - lo + 1;
    let budget = cfg.budget.min(size);
    let mut rng = rng::seeded(cfg.seed);
    let mut trace = Vec::with_capacity(budget as usize);

    if let Acquisition::Prs = cfg.acquisition {
        let points: Vec<u64> = if size <= CANDIDATE_CAP {
            let mut all: Vec<u64> = (lo..=hi).collect();
            rng::shuffle(&mut rng, &mut all);
            all.truncate(budget as usize);
            all
        } else {
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(budget as usize);
            while (out.len() as u64) < budget {
                let x = lo + rng::below(&mut rng, size);
                if seen.insert(x) {
                    out.push(x);
                }
            }
            out
        };
        trace.extend(points.into_iter().map(|x| Evaluation { point: x, value: f(x) }));
        return Ok(finish(trace));
    }

    let normal = Normal::standard();
    let mut model = Surrogate::new(prior);
    let mut pool = Pool::new(lo, hi);
    let mut incumbent = f64::NEG_INFINITY;
    for _ in 0..budget {
        let cands = pool.candidates(&mut rng);
        let coords: Vec<u64> = cands.iter().map(|&x| x - lo + 1).collect();
        let (means, vars) = model.predict(&coords)?;
        let pick = match cfg.acquisition {
            Acquisition::Ucb { beta } => argmax(means.iter().zip(&vars).map(|(m, v)| m + beta * v.sqrt())),
            Acquisition::Ei { xi } if incumbent.is_finite() => argmax(
                means.iter().zip(&vars).map(|(&m, &v)| expected_improvement(m, v, incumbent, xi, &normal)),
            ),
            Acquisition::Ei { .. } => argmax(vars.iter().copied()),
            Acquisition::Prs => unreachable!(),
        }
        .expect("candidate set is non-empty while budget remains");
        let x = cands[pick];
        let y = f(x);
        model.observe(x - lo + 1, y)?;
        pool.take(x);
        incumbent = incumbent.max(y);
        trace.push(Evaluation { point: x, value: y });
    }
    Ok(finish(trace))
}

fn finish(trace: Vec<Evaluation>) -> BoRunResult {
    let best = trace
        .iter()
        .fold(None::<Evaluation>, |acc, e| match acc {
            Some(b) if b.value >= e.value => Some(b),
            _ => Some(*e),
        })
        .expect("at least one evaluation");
    BoRunResult {
        best_point: best.point,
        best_value: best.value,
        evaluations_used: trace.len() as u64,
        trace,
    }
}
