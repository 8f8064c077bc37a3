use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gp::{KernelFamily, PriorSpec};

pub const DEFAULT_TOLERANCE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub lo: u64,
    pub hi: u64,
    pub prior: PriorSpec,
}

impl LedgerEntry {
    fn overlaps(&self, lo: u64, hi: u64) -> bool {
        self.lo <= hi && lo <= self.hi
    }
}

/// Why a prior was refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contradiction {
    pub lo: u64,
    pub hi: u64,
    pub against: LedgerEntry,
    pub reason: String,
}

impl fmt::Display for Contradiction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "region [{}, {}] overlaps accepted prior on [{}, {}]: {}",
            self.lo, self.hi, self.against.lo, self.against.hi, self.reason
        )
    }
}

impl std::error::Error for Contradiction {}

/// Priors accepted so far in a run, keyed by region.
///
/// Two priors whose regions overlap must share a kernel family, and their
/// variances (and lengthscales, when present) may differ by at most a factor
/// `1 + tolerance`. The mean constant is not compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyLedger {
    tolerance: f64,
    entries: Vec<LedgerEntry>,
}

impl Default for ConsistencyLedger {
    fn default() -> Self {
        ConsistencyLedger::new(DEFAULT_TOLERANCE)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    a.max(b) / a.min(b)
}

impl ConsistencyLedger {
    pub fn new(tolerance: f64) -> Self {
        assert!(tolerance >= 0.0 && tolerance.is_finite(), "tolerance must be a non-negative number");
        ConsistencyLedger { tolerance, entries: Vec::new() }
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    fn overlapping(&self, lo: u64, hi: u64) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(move |e| e.overlaps(lo, hi))
    }

    pub fn check(&self, lo: u64, hi: u64, prior: &PriorSpec) -> Result<(), Contradiction> {
        let limit = 1.0 + self.tolerance;
        let refuse = |e: &LedgerEntry, reason: String| Contradiction { lo, hi, against: e.clone(), reason };
        for e in self.overlapping(lo, hi) {
            let (old, new) = (e.prior.kernel(), prior.kernel());
            if old.family() != new.family() {
                return Err(refuse(e, format!("kernel family {:?} differs from {:?}", new.family(), old.family())));
            }
            let r = ratio(old.variance(), new.variance());
            if r > limit * (1.0 + 1e-12) {
                return Err(refuse(
                    e,
                    format!(
                        "variance {} vs {} differs by factor {r:.4}, tolerance allows {limit:.4}",
                        new.variance(),
                        old.variance()
                    ),
                ));
            }
            if let (Some(a), Some(b)) = (old.lengthscale(), new.lengthscale()) {
                let r = ratio(a, b);
                if r > limit * (1.0 + 1e-12) {
                    return Err(refuse(
                        e,
                        format!("lengthscale {b} vs {a} differs by factor {r:.4}, tolerance allows {limit:.4}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Checks and records.
    pub fn admit(&mut self, lo: u64, hi: u64, prior: &PriorSpec) -> Result<(), Contradiction> {
        self.check(lo, hi, prior)?;
        self.entries.push(LedgerEntry { lo, hi, prior: *prior });
        Ok(())
    }

    /// Kernel family forced on `[lo, hi]` by earlier entries, if any.
    pub fn family(&self, lo: u64, hi: u64) -> Option<KernelFamily> {
        self.overlapping(lo, hi).next().map(|e| e.prior.kernel().family())
    }

    /// Interval of variances that [`check`](Self::check) would accept on
    /// `[lo, hi]`.
    pub fn variance_band(&self, lo: u64, hi: u64) -> (f64, f64) {
        self.band(lo, hi, |p| Some(p.kernel().variance()))
    }

    pub fn lengthscale_band(&self, lo: u64, hi: u64) -> (f64, f64) {
        self.band(lo, hi, |p| p.kernel().lengthscale())
    }

    // Pairwise-compatible intervals on a line share a common point, so the
    // intersection is never empty for admitted entries.
    fn band(&self, lo: u64, hi: u64, key: impl Fn(&PriorSpec) -> Option<f64>) -> (f64, f64) {
        let limit = 1.0 + self.tolerance;
        let mut band = (0.0, f64::INFINITY);
        for v in self.overlapping(lo, hi).filter_map(|e| key(&e.prior)) {
            band.0 = f64::max(band.0, v / limit);
            band.1 = f64::min(band.1, v * limit);
        }
        band
    }
}
