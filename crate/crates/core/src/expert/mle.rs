use log::debug;

use super::{Expert, ExpertError, ExpertQuery, ExpertResponse, QueryContext};
use crate::gp::{log_likelihood, wiener_log_likelihood, Kernel, KernelFamily, ObservationSet, PriorSpec};

const VARIANCE_POINTS: usize = 17;
const VARIANCE_DECADES: f64 = 6.0;
const LENGTHSCALE_POINTS: usize = 9;
/// Stationary fits use at most this many observations, evenly thinned.
const DENSE_FIT_LIMIT: usize = 96;

/// Fits prior hyperparameters to the evaluations already seen in a cell by
/// maximising the exact marginal likelihood over a fixed grid.
#[derive(Debug, Clone)]
pub struct MleExpert {
    family: KernelFamily,
    fallback: PriorSpec,
    variance_floor: f64,
}

fn log_grid(centre: f64, decades: f64, points: usize) -> impl Iterator<Item = f64> {
    let step = decades / (points - 1) as f64;
    (0..points).map(move |i| centre * 10f64.powf(-decades / 2.0 + step * i as f64))
}

fn span_grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let ratio = (hi / lo).ln();
    (0..points).map(move |i| lo * (ratio * i as f64 / (points - 1) as f64).exp())
}

impl MleExpert {
    /// `fallback` answers queries with fewer than two observations. It also
    /// fixes the kernel family fitted.
    pub fn new(fallback: PriorSpec) -> Self {
        MleExpert { family: fallback.kernel().family(), fallback, variance_floor: 1e-6 }
    }

    pub fn with_variance_floor(mut self, floor: f64) -> Self {
        assert!(floor > 0.0, "variance floor must be positive");
        self.variance_floor = floor;
        self
    }

    /// Best grid point for `history` (cell-local coordinates, all ≥ 1).
    pub fn fit(&self, family: KernelFamily, history: &ObservationSet, size: u64) -> PriorSpec {
        if history.len() < 2 {
            return self.fallback;
        }
        let values = history.values();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        match family {
            KernelFamily::Wiener => {
                // Increment variance per unit step: the natural scale of the
                // Wiener likelihood.
                let mut prev = (0u64, mean);
                let mut acc = 0.0;
                for (s, y) in history.iter() {
                    acc += (y - prev.1).powi(2) / (s - prev.0) as f64;
                    prev = (s, y);
                }
                let centre = acc / n;
                if !(centre > self.variance_floor) {
                    return self.spec(Kernel::Wiener { variance: self.variance_floor }, mean);
                }
                let best = log_grid(centre, VARIANCE_DECADES, VARIANCE_POINTS)
                    .map(|v| v.max(self.variance_floor))
                    .filter_map(|v| wiener_log_likelihood(v, mean, history).ok().map(|ll| (v, ll)))
                    .fold((self.variance_floor, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
                self.spec(Kernel::Wiener { variance: best.0 }, mean)
            }
            KernelFamily::Se | KernelFamily::Matern52 => {
                let thinned = thin(history, DENSE_FIT_LIMIT);
                let centre = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let make = |variance: f64, lengthscale: f64| match family {
                    KernelFamily::Se => Kernel::SquaredExponential { variance, lengthscale },
                    _ => Kernel::Matern52 { variance, lengthscale },
                };
                if !(centre > self.variance_floor) {
                    return self.spec(make(self.variance_floor, size.max(1) as f64), mean);
                }
                let lmax = size.max(1) as f64;
                let mut best = (make(centre, lmax), f64::NEG_INFINITY);
                for v in log_grid(centre, VARIANCE_DECADES, VARIANCE_POINTS) {
                    for l in span_grid((lmax / 256.0).max(1e-3), lmax, LENGTHSCALE_POINTS) {
                        let k = make(v.max(self.variance_floor), l);
                        let Ok(spec) = PriorSpec::new(k, mean) else { continue };
                        if let Ok(ll) = log_likelihood(&spec, &thinned) {
                            if ll > best.1 {
                                best = (k, ll);
                            }
                        }
                    }
                }
                self.spec(best.0, mean)
            }
        }
    }

    fn spec(&self, kernel: Kernel, mean: f64) -> PriorSpec {
        PriorSpec::with_jitter(kernel, mean, self.fallback.jitter()).unwrap_or(self.fallback)
    }
}

fn thin(history: &ObservationSet, limit: usize) -> ObservationSet {
    if history.len() <= limit {
        return history.clone();
    }
    let all: Vec<(u64, f64)> = history.iter().collect();
    (0..limit).map(|i| all[i * all.len() / limit]).collect()
}

fn clamp_into(x: f64, (lo, hi): (f64, f64)) -> f64 {
    if lo > hi {
        return x;
    }
    x.clamp(lo, hi)
}

impl Expert for MleExpert {
    fn respond(&mut self, query: &ExpertQuery, ctx: &QueryContext<'_>) -> Result<ExpertResponse, ExpertError> {
        let family = ctx.ledger.family(query.lo, query.hi).unwrap_or(self.family);
        let fitted = self.fit(family, ctx.history, query.size);
        // Keep the answer inside what earlier answers on overlapping regions
        // allow.
        let k = fitted.kernel();
        let variance = clamp_into(k.variance(), ctx.ledger.variance_band(query.lo, query.hi));
        let lengthscale = k.lengthscale().map(|l| clamp_into(l, ctx.ledger.lengthscale_band(query.lo, query.hi)));
        let prior = self.spec(k.with_params(variance, lengthscale), fitted.mean());
        debug!(
            "mle fit for {} on [{}, {}] from {} points: {:?}",
            query.query_id,
            query.lo,
            query.hi,
            ctx.history.len(),
            prior
        );
        Ok(ExpertResponse {
            query_id: query.query_id.clone(),
            prior,
            annotation: format!("mle from {} observations", ctx.history.len()),
        })
    }
}
