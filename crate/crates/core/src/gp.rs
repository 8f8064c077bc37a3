//! Finite-domain Gaussian processes.
//!
//! Kernels are evaluated on non-negative integer coordinates. Search and BO
//! code works in cell-local coordinates, `offset = x - lo + 1`, so the
//! Wiener anchor `W_0 = 0` sits just left of every cell. The covariance
//! matrix is never materialised beyond the points that are actually
//! conditioned on.
//!
//! Two exact posterior routes exist: [`posterior`] (dense Cholesky,
//! any kernel) and [`WienerBridge`] (Markov property of Brownian motion,
//! O(log n) per query). They agree to rounding error; the tests hold them
//! to each other.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::rng;

/// Diagonal jitter tried, in order, after `PriorSpec::jitter` fails.
pub const JITTER_LADDER: [f64; 4] = [1e-12, 1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `variance * min(s, t)`
    Wiener { variance: f64 },
    /// `variance * exp(-r^2 / (2 l^2))`
    SquaredExponential { variance: f64, lengthscale: f64 },
    /// `variance * (1 + √5 r/l + 5r²/(3l²)) * exp(-√5 r/l)`
    Matern52 { variance: f64, lengthscale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Wiener,
    Se,
    Matern52,
}

impl Kernel {
    pub fn family(&self) -> KernelFamily {
        match self {
            Kernel::Wiener { .. } => KernelFamily::Wiener,
            Kernel::SquaredExponential { .. } => KernelFamily::Se,
            Kernel::Matern52 { .. } => KernelFamily::Matern52,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Kernel::Wiener { variance }
            | Kernel::SquaredExponential { variance, .. }
            | Kernel::Matern52 { variance, .. } => variance,
        }
    }

    pub fn lengthscale(&self) -> Option<f64> {
        match *self {
            Kernel::Wiener { .. } => None,
            Kernel::SquaredExponential { lengthscale, .. } | Kernel::Matern52 { lengthscale, .. } => {
                Some(lengthscale)
            }
        }
    }

    /// Same family, different hyperparameters.
    pub fn with_params(&self, variance: f64, lengthscale: Option<f64>) -> Kernel {
        let l = lengthscale.or(self.lengthscale()).unwrap_or(1.0);
        match self {
            Kernel::Wiener { .. } => Kernel::Wiener { variance },
            Kernel::SquaredExponential { .. } => Kernel::SquaredExponential { variance, lengthscale: l },
            Kernel::Matern52 { .. } => Kernel::Matern52 { variance, lengthscale: l },
        }
    }

    pub(crate) fn cov(&self, s: u64, t: u64) -> f64 {
        match *self {
            Kernel::Wiener { variance } => variance * s.min(t) as f64,
            Kernel::SquaredExponential { variance, lengthscale } => {
                let r = s.abs_diff(t) as f64 / lengthscale;
                variance * (-0.5 * r * r).exp()
            }
            Kernel::Matern52 { variance, lengthscale } => {
                let r = 5f64.sqrt() * s.abs_diff(t) as f64 / lengthscale;
                variance * (1.0 + r + r * r / 3.0) * (-r).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.variance();
        if !(v > 0.0 && v.is_finite()) {
            return Err(contract(format!("kernel variance must be positive, got {v}")));
        }
        if let Some(l) = self.lengthscale() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(contract(format!("kernel lengthscale must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

/// A Gaussian-process prior: kernel, constant mean and diagonal jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorWire", into = "PriorWire")]
pub struct PriorSpec {
    kernel: Kernel,
    mean: f64,
    jitter: f64,
}

impl PriorSpec {
    pub fn new(kernel: Kernel, mean: f64) -> Result<Self> {
        Self::with_jitter(kernel, mean, 0.0)
    }

    pub fn with_jitter(kernel: Kernel, mean: f64, jitter: f64) -> Result<Self> {
        kernel.validate()?;
        if !mean.is_finite() {
            return Err(contract("prior mean must be finite"));
        }
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(contract("jitter must be non-negative"));
        }
        Ok(PriorSpec { kernel, mean, jitter })
    }

    pub fn wiener(variance: f64) -> Result<Self> {
        Self::new(Kernel::Wiener { variance }, 0.0)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

/// The expert wire schema for a prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorWire {
    pub kernel: KernelFamily,
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengthscale: Option<f64>,
    #[serde(default)]
    pub mean: f64,
}

impl TryFrom<PriorWire> for PriorSpec {
    type Error = Error;

    fn try_from(w: PriorWire) -> Result<Self> {
        let need_l = || w.lengthscale.ok_or_else(|| contract("stationary kernels need a lengthscale"));
        let kernel = match w.kernel {
            KernelFamily::Wiener => Kernel::Wiener { variance: w.variance },
            KernelFamily::Se => Kernel::SquaredExponential { variance: w.variance, lengthscale: need_l()? },
            KernelFamily::Matern52 => Kernel::Matern52 { variance: w.variance, lengthscale: need_l()? },
        };
        PriorSpec::new(kernel, w.mean)
    }
}

impl From<PriorSpec> for PriorWire {
    fn from(p: PriorSpec) -> Self {
        PriorWire {
            kernel: p.kernel.family(),
            variance: p.kernel.variance(),
            lengthscale: p.kernel.lengthscale(),
            mean: p.mean,
        }
    }
}

/// Covariance between integer coordinates `s` and `t`.
pub fn kernel_eval(spec: &PriorSpec, s: i64, t: i64) -> Result<f64> {
    if s < 0 || t < 0 {
        if let Kernel::Wiener { .. } = spec.kernel {
            return Err(contract("the Wiener kernel is defined on non-negative indices"));
        }
        // Stationary kernels only see the distance.
        let shift = s.min(t).unsigned_abs();
        return Ok(spec.kernel.cov((s + shift as i64) as u64, (t + shift as i64) as u64));
    }
    Ok(spec.kernel.cov(s as u64, t as u64))
}

/// Noise-free observations at distinct points, ordered by point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet(BTreeMap<u64, f64>);

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, point: u64, value: f64) -> Result<()> {
        if self.0.contains_key(&point) {
            return Err(contract(format!("duplicate observation at {point}")));
        }
        self.0.insert(point, value);
        Ok(())
    }

    /// Inserts or overwrites.
    pub fn upsert(&mut self, point: u64, value: f64) {
        self.0.insert(point, value);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.0.iter().map(|(&p, &v)| (p, v))
    }

    pub fn points(&self) -> Vec<u64> {
        self.0.keys().copied().collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.values().copied().collect()
    }
}

impl FromIterator<(u64, f64)> for ObservationSet {
    fn from_iter<I: IntoIterator<Item = (u64, f64)>>(iter: I) -> Self {
        ObservationSet(iter.into_iter().collect())
    }
}

fn gram(kernel: &Kernel, points: &[u64]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), points.len(), |i, j| kernel.cov(points[i], points[j]))
}

/// Cholesky factor of `gram + jitter * I`, escalating the jitter along
/// [`JITTER_LADDER`]. Returns the factor and the jitter that worked.
pub fn factorize(gram: &DMatrix<f64>, base_jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let ladder = std::iter::once(base_jitter).chain(JITTER_LADDER.iter().map(|&j| j.max(base_jitter)));
    for jitter in ladder {
        let mut k = gram.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::Numerical(format!(
        "{}x{} Gram matrix is not positive definite after jitter {}",
        gram.nrows(),
        gram.ncols(),
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Exact noise-free posterior at `queries`. Variances are clamped at 0.
pub fn posterior(spec: &PriorSpec, obs: &ObservationSet, queries: &[u64]) -> Result<Posterior> {
    let kernel = spec.kernel;
    if obs.is_empty() {
        return Ok(Posterior {
            means: vec![spec.mean; queries.len()],
            variances: queries.iter().map(|&q| kernel.cov(q, q)).collect(),
        });
    }
    let points = obs.points();
    let (chol, _) = factorize(&gram(&kernel, &points), spec.jitter)?;
    let resid = DVector::from_iterator(points.len(), obs.iter().map(|(_, y)| y - spec.mean));
    let alpha = chol.solve(&resid);
    let cross = DMatrix::from_fn(points.len(), queries.len(), |i, j| kernel.cov(points[i], queries[j]));
    let v = chol
        .l()
        .solve_lower_triangular(&cross)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let means = (0..queries.len()).map(|j| spec.mean + cross.column(j).dot(&alpha)).collect();
    let variances = queries
        .iter()
        .enumerate()
        .map(|(j, &q)| (kernel.cov(q, q) - v.column(j).norm_squared()).max(0.0))
        .collect();
    Ok(Posterior { means, variances })
}

/// Exact log marginal likelihood of `obs` under `spec`.
pub fn log_likelihood(spec: &PriorSpec, obs: &ObservationSet) -> Result<f64> {
    if obs.is_empty() {
        return Ok(0.0);
    }
    let points = obs.points();
    let (chol, _) = factorize(&gram(&spec.kernel, &points), spec.jitter)?;
    let resid = DVector::from_iterator(points.len(), obs.iter().map(|(_, y)| y - spec.mean));
    let alpha = chol.solve(&resid);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * resid.dot(&alpha) - 0.5 * log_det - 0.5 * points.len() as f64 * (2.0 * PI).ln())
}

/// Wiener log likelihood from independent increments; O(n). Points must be
/// positive. Equal to [`log_likelihood`] for the Wiener kernel.
pub fn wiener_log_likelihood(variance: f64, mean: f64, obs: &ObservationSet) -> Result<f64> {
    let mut prev = (0u64, mean);
    let mut total = 0.0;
    for (s, y) in obs.iter() {
        if s == 0 {
            return Err(contract("Wiener increments need positive points"));
        }
        let ds = (s - prev.0) as f64;
        let dy = y - prev.1;
        total += -0.5 * ((2.0 * PI * variance * ds).ln() + dy * dy / (variance * ds));
        prev = (s, y);
    }
    Ok(total)
}

/// One realization of the prior at `points` (non-decreasing).
///
/// The Wiener kernel is sampled by cumulative independent Gaussian
/// increments from `W_0 = 0`; stationary kernels by a jittered Cholesky
/// factor of the Gram matrix.
pub fn sample_realization(spec: &PriorSpec, points: &[u64], seed: u64) -> Result<Vec<f64>> {
    if points.windows(2).any(|w| w[0] > w[1]) {
        return Err(contract("points must be sorted ascending"));
    }
    let mut rng = rng::seeded(seed);
    match spec.kernel {
        Kernel::Wiener { variance } => {
            let mut prev = 0u64;
            let mut w = 0.0;
            Ok(points
                .iter()
                .map(|&s| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    w += (variance * (s - prev) as f64).sqrt() * z;
                    prev = s;
                    spec.mean + w
                })
                .collect())
        }
        _ => {
            let (chol, _) = factorize(&gram(&spec.kernel, points), spec.jitter)?;
            let z = DVector::from_iterator(points.len(), (0..points.len()).map(|_| StandardNormal.sample(&mut rng)));
            let f = chol.l() * z;
            Ok(f.iter().map(|v| spec.mean + v).collect())
        }
    }
}

/// Exact Wiener posterior via the Markov property: between neighbouring
/// observations the process is a Brownian bridge, to the right of the last
/// one it is a Brownian motion started there.
#[derive(Debug, Clone)]
pub struct WienerBridge {
    variance: f64,
    mean: f64,
    obs: BTreeMap<u64, f64>,
}

impl WienerBridge {
    pub fn new(variance: f64, mean: f64) -> Self {
        WienerBridge { variance, mean, obs: BTreeMap::new() }
    }

    /// Conditions on `value` at positive coordinate `s`.
    pub fn observe(&mut self, s: u64, value: f64) -> Result<()> {
        if s == 0 {
            return Err(contract("coordinate 0 is the fixed anchor"));
        }
        if self.obs.insert(s, value).is_some() {
            return Err(contract(format!("duplicate observation at {s}")));
        }
        Ok(())
    }

    /// [`predict`](Self::predict) for ascending `qs` in one merge pass.
    pub fn predict_sorted(&self, qs: &[u64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if qs.windows(2).any(|w| w[0] > w[1]) {
            return Err(contract("query points must be ascending"));
        }
        let mut means = Vec::with_capacity(qs.len());
        let mut vars = Vec::with_capacity(qs.len());
        let mut right = self.obs.iter().map(|(&s, &y)| (s, y)).peekable();
        let mut left = (0u64, self.mean);
        for &q in qs {
            while let Some(&(s, y)) = right.peek() {
                if s > q {
                    break;
                }
                left = (s, y);
                right.next();
            }
            let (m, v) = if left.0 == q {
                (left.1, 0.0)
            } else if let Some(&(rs, ry)) = right.peek() {
                let span = (rs - left.0) as f64;
                let l = (q - left.0) as f64;
                (left.1 + (ry - left.1) * l / span, self.variance * l * (rs - q) as f64 / span)
            } else {
                (left.1, self.variance * (q - left.0) as f64)
            };
            means.push(m);
            vars.push(v);
        }
        Ok((means, vars))
    }

    /// Posterior (mean, variance) at `q`.
    pub fn predict(&self, q: u64) -> (f64, f64) {
        let (ls, ly) = self.obs.range(..=q).next_back().map(|(&s, &y)| (s, y)).unwrap_or((0, self.mean));
        if ls == q {
            return (ly, 0.0);
        }
        match self.obs.range(q..).next() {
            None => (ly, self.variance * (q - ls) as f64),
            Some((&rs, &ry)) => {
                let span = (rs - ls) as f64;
                let left = (q - ls) as f64;
                let right = (rs - q) as f64;
                (ly + (ry - ly) * left / span, self.variance * left * right / span)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: f64) -> PriorSpec {
        PriorSpec::wiener(v).unwrap()
    }

    #[test]
    fn wiener_kernel_values() {
        assert_eq!(kernel_eval(&w(1.0), 3, 5).unwrap(), 3.0);
        assert_eq!(kernel_eval(&w(1.0), 0, 17).unwrap(), 0.0);
        assert_eq!(kernel_eval(&w(2.0), 2, 7).unwrap(), 4.0);
        assert!(kernel_eval(&w(1.0), -1, 2).is_err());
    }

    #[test]
    fn stationary_kernels_depend_on_distance() {
        let se = PriorSpec::new(Kernel::SquaredExponential { variance: 2.0, lengthscale: 3.0 }, 0.0).unwrap();
        assert_eq!(kernel_eval(&se, 4, 4).unwrap(), 2.0);
        let d = kernel_eval(&se, 1, 4).unwrap();
        assert!((d - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(kernel_eval(&se, -2, 1).unwrap(), d);
        let m = PriorSpec::new(Kernel::Matern52 { variance: 1.0, lengthscale: 1.0 }, 0.0).unwrap();
        let r = 5f64.sqrt();
        let expect = (1.0 + r + r * r / 3.0) * (-r).exp();
        assert!((kernel_eval(&m, 0, 1).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn invalid_priors_are_rejected() {
        assert!(PriorSpec::wiener(0.0).is_err());
        assert!(PriorSpec::new(Kernel::Matern52 { variance: 1.0, lengthscale: -1.0 }, 0.0).is_err());
        assert!(PriorSpec::with_jitter(Kernel::Wiener { variance: 1.0 }, 0.0, -1.0).is_err());
    }

    #[test]
    fn wire_schema() {
        let json = serde_json::to_string(&w(1.5)).unwrap();
        assert_eq!(json, r#"{"kernel":"wiener","variance":1.5,"mean":0.0}"#);
        let se: PriorSpec =
            serde_json::from_str(r#"{"kernel":"se","variance":1,"lengthscale":4,"mean":2}"#).unwrap();
        assert_eq!(se.kernel(), &Kernel::SquaredExponential { variance: 1.0, lengthscale: 4.0 });
        assert_eq!(se.mean(), 2.0);
        assert!(serde_json::from_str::<PriorSpec>(r#"{"kernel":"se","variance":1,"mean":0}"#).is_err());
        assert!(serde_json::from_str::<PriorSpec>(r#"{"kernel":"wiener","variance":-1}"#).is_err());
    }

    #[test]
    fn prior_recovery_without_observations() {
        let spec = PriorSpec::new(Kernel::Wiener { variance: 2.0 }, 1.5).unwrap();
        let post = posterior(&spec, &ObservationSet::new(), &[3, 10]).unwrap();
        assert_eq!(post.means, vec![1.5, 1.5]);
        assert_eq!(post.variances, vec![6.0, 20.0]);
    }

    #[test]
    fn interpolates_observations() {
        let obs: ObservationSet = [(5, 0.7), (9, -0.2)].into_iter().collect();
        let post = posterior(&w(1.0), &obs, &[5, 9]).unwrap();
        assert!((post.means[0] - 0.7).abs() < 1e-9);
        assert!((post.means[1] + 0.2).abs() < 1e-9);
        assert!(post.variances.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn two_point_wiener_posterior() {
        // Gram [[2,2],[2,8]], k* = [2,4], y = [0.5,-1]: solved by hand,
        // mean = 0, variance = 4/3.
        let obs: ObservationSet = [(2, 0.5), (8, -1.0)].into_iter().collect();
        let post = posterior(&w(1.0), &obs, &[4]).unwrap();
        assert!(post.means[0].abs() < 1e-12, "{}", post.means[0]);
        assert!((post.variances[0] - 4.0 / 3.0).abs() < 1e-12);
        let (m, v) = {
            let mut b = WienerBridge::new(1.0, 0.0);
            b.observe(2, 0.5).unwrap();
            b.observe(8, -1.0).unwrap();
            b.predict(4)
        };
        assert!(m.abs() < 1e-12);
        assert!((v - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bridge_matches_cholesky_route() {
        let spec = PriorSpec::new(Kernel::Wiener { variance: 1.7 }, 0.3).unwrap();
        let pts = [3u64, 4, 11, 30, 31, 64];
        let vals = sample_realization(&spec, &pts, 5).unwrap();
        let obs: ObservationSet = pts.iter().copied().zip(vals.iter().copied()).collect();
        let mut bridge = WienerBridge::new(1.7, 0.3);
        for (p, v) in obs.iter() {
            bridge.observe(p, v).unwrap();
        }
        let queries: Vec<u64> = (1..=80).collect();
        let post = posterior(&spec, &obs, &queries).unwrap();
        for (i, &q) in queries.iter().enumerate() {
            let (m, v) = bridge.predict(q);
            assert!((m - post.means[i]).abs() < 1e-8, "mean at {q}");
            assert!((v - post.variances[i]).abs() < 1e-8, "var at {q}");
        }
        let (means, vars) = bridge.predict_sorted(&queries).unwrap();
        for (i, &q) in queries.iter().enumerate() {
            assert_eq!((means[i], vars[i]), bridge.predict(q), "sweep at {q}");
        }
        assert!(bridge.predict_sorted(&[5, 4]).is_err());
    }

    #[test]
    fn wiener_likelihood_routes_agree() {
        let spec = PriorSpec::new(Kernel::Wiener { variance: 0.8 }, -0.4).unwrap();
        let pts = [1u64, 2, 7, 9, 20];
        let vals = sample_realization(&spec, &pts, 2).unwrap();
        let obs: ObservationSet = pts.iter().copied().zip(vals).collect();
        let dense = log_likelihood(&spec, &obs).unwrap();
        let fast = wiener_log_likelihood(0.8, -0.4, &obs).unwrap();
        assert!((dense - fast).abs() < 1e-9, "{dense} vs {fast}");
    }

    #[test]
    fn realization_anchor_and_determinism() {
        assert_eq!(sample_realization(&w(1.0), &[0], 99).unwrap(), vec![0.0]);
        let a = sample_realization(&w(1.0), &[1, 2, 3], 4).unwrap();
        assert_eq!(a, sample_realization(&w(1.0), &[1, 2, 3], 4).unwrap());
        let se = PriorSpec::new(Kernel::SquaredExponential { variance: 1.0, lengthscale: 2.0 }, 0.0).unwrap();
        let b = sample_realization(&se, &[1, 2, 3, 4], 4).unwrap();
        assert_eq!(b, sample_realization(&se, &[1, 2, 3, 4], 4).unwrap());
        assert!(sample_realization(&w(1.0), &[3, 1], 0).is_err());
    }

    #[test]
    fn jitter_rescues_singular_gram() {
        // Repeated points make the SE Gram exactly singular.
        let g = DMatrix::from_element(3, 3, 1.0);
        let (_, jitter) = factorize(&g, 0.0).unwrap();
        assert!(jitter > 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(factorize(&bad, 0.0), Err(Error::Numerical(_))));
    }
}
