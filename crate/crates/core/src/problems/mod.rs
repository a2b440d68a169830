//! Synthetic benchmark problems with known optima.

mod random;
mod sines;

pub use random::random_search;
pub use random::random_search_replication;

use std::fmt;

use rand::Rng;

use crate::acquisition::OuterFunction;
use crate::error::{Error, Result};
use crate::gp::SearchDomain;
use crate::optimize::{maximize_deterministic, OptimizerConfig};
use crate::qmc;
use sines::SineFamily;

/// Query surfaces a problem exposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Surface {
    /// `x -> f(x)`
    Full,
    /// `x -> h(x)` with a known outer function, `f = g(h)`.
    Inner,
    /// `(x, w) -> h(x, w)` at a fidelity; the last one is the target.
    Fidelity,
    /// `(x, j) -> h(x, w_j)` with `f = sum_j h(x, w_j)`.
    Constituent,
}

impl Surface {
    pub fn name(self) -> &'static str {
        match self {
            Surface::Full => "full",
            Surface::Inner => "inner",
            Surface::Fidelity => "fidelity",
            Surface::Constituent => "constituent",
        }
    }
}

/// Constants of the queuing surrogate.
#[derive(Clone, Debug, PartialEq)]
pub struct QueuingParams {
    /// Arrival rate.
    pub lambda: f64,
    /// Cost per unit service rate.
    pub service_cost: f64,
    /// Cost per waiting customer.
    pub wait_cost: f64,
    /// Simulation horizons, increasing; the last is the target fidelity.
    pub horizons: Vec<f64>,
}

impl Default for QueuingParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            service_cost: 1.0,
            wait_cost: 4.0,
            horizons: vec![10.0, 30.0, 100.0],
        }
    }
}

impl QueuingParams {
    /// Startup bias coefficient of the finite-horizon estimate.
    fn beta(&self, x: f64) -> f64 {
        2.0 / (x - self.lambda)
    }

    /// `-[c_s x + c_w lambda / (x - lambda) (1 - beta(x) / T)]`
    pub fn value(&self, x: f64, horizon: f64) -> f64 {
        let wait = self.wait_cost * self.lambda / (x - self.lambda);
        -(self.service_cost * x + wait * (1.0 - self.beta(x) / horizon))
    }

    pub fn derivative(&self, x: f64, horizon: f64) -> f64 {
        let u = x - self.lambda;
        let cl = self.wait_cost * self.lambda;
        // d/dx [cl/u - 2 cl/(u^2 T)]
        -(self.service_cost - cl / (u * u) + 4.0 * cl / (u * u * u * horizon))
    }

    /// Minimizer of the steady-state cost `c_s x + c_w lambda / (x - lambda)`.
    pub fn steady_state_optimum(&self) -> f64 {
        self.lambda + (self.wait_cost * self.lambda / self.service_cost).sqrt()
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Square,
    Calibration { h: SineFamily, target: Vec<f64> },
    Queuing(QueuingParams),
    Constituent { h: SineFamily, locations: Vec<f64> },
}

/// A benchmark objective with its query surfaces and costs. Maximization.
#[derive(Clone)]
pub struct Problem {
    name: String,
    domain: SearchDomain<f64>,
    kind: Kind,
    outer: Option<OuterFunction>,
    optimum: f64,
    argmax: Vec<f64>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("optimum", &self.optimum)
            .finish()
    }
}

/// Named constructor parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProblemParams {
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
}

pub const PROBLEM_NAMES: [&str; 4] = ["square_scalar", "calibration", "queuing_mf", "constituent_sum"];

impl Problem {
    pub fn by_name(name: &str, params: &ProblemParams) -> Result<Self> {
        match name {
            "square_scalar" => Ok(Self::square_scalar()),
            "calibration" => Self::calibration(
                params.d.unwrap_or(3),
                params.k.unwrap_or(4),
                params.seed.unwrap_or(7),
            ),
            "queuing_mf" => Self::queuing_mf(),
            "constituent_sum" => Self::constituent_sum(params.k.unwrap_or(8), params.seed.unwrap_or(7)),
            other => Err(Error::InvalidArgument(format!("unknown problem `{other}`"))),
        }
    }

    /// `f(x) = -h(x)^2` with `h(x) = sin(3x) + 0.6x` on `[-2, 2]`.
    pub fn square_scalar() -> Self {
        Self {
            name: "square_scalar".into(),
            domain: SearchDomain::new(vec![-2.0], vec![2.0]).expect("valid"),
            kind: Kind::Square,
            outer: Some(OuterFunction::NegSumSquares(vec![0.0])),
            optimum: 0.0,
            argmax: vec![0.0],
        }
    }

    /// Calibration of `k` seeded sinusoid outputs on `[0, 1]^d` against
    /// `y_obs = h(x_dagger)`: `f(x) = -||h(x) - y_obs||^2`, `f* = 0`.
    pub fn calibration(d: usize, k: usize, seed: u64) -> Result<Self> {
        if !(2..=6).contains(&d) || !(2..=8).contains(&k) {
            return Err(Error::InvalidArgument(format!(
                "calibration needs d in [2, 6] and k in [2, 8], got d={d}, k={k}"
            )));
        }
        let h = SineFamily::new(k, d, 3, 3.0, seed, 0);
        let mut r = qmc::rng(seed, 1);
        let x_dagger: Vec<f64> = (0..d).map(|_| r.random_range(0.1..0.9)).collect();
        let target: Vec<f64> = (0..k).map(|j| h.eval(j, &x_dagger)).collect();
        Ok(Self {
            name: "calibration".into(),
            domain: SearchDomain::unit(d),
            kind: Kind::Calibration {
                h,
                target: target.clone(),
            },
            outer: Some(OuterFunction::NegSumSquares(target)),
            optimum: 0.0,
            argmax: x_dagger,
        })
    }

    /// Service-rate choice for a queue with finite-horizon cost estimates.
    pub fn queuing_mf() -> Result<Self> {
        Self::queuing_with(QueuingParams::default(), 1.2, 6.0)
    }

    pub fn queuing_with(params: QueuingParams, lower: f64, upper: f64) -> Result<Self> {
        if !(lower > params.lambda) || params.horizons.is_empty() {
            return Err(Error::InvalidArgument("service rates must exceed the arrival rate".into()));
        }
        let tf = *params.horizons.last().expect("nonempty");
        let (argmax, optimum) = queuing_optimum(&params, tf, lower, upper);
        Ok(Self {
            name: "queuing_mf".into(),
            domain: SearchDomain::new(vec![lower], vec![upper])?,
            kind: Kind::Queuing(params),
            outer: None,
            optimum,
            argmax: vec![argmax],
        })
    }

    /// `f(x) = sum_j h(x, w_j)` over `k` constituents on a grid of `w` in
    /// `[0, 1]`, with `x` in `[0, 1]^2`.
    pub fn constituent_sum(k: usize, seed: u64) -> Result<Self> {
        if !(4..=100).contains(&k) {
            return Err(Error::InvalidArgument(format!("constituent_sum needs k in [4, 100], got {k}")));
        }
        let h = SineFamily::new(1, 3, 4, 3.0, seed, 2);
        let locations: Vec<f64> = (0..k).map(|j| j as f64 / (k - 1) as f64).collect();
        let mut p = Self {
            name: "constituent_sum".into(),
            domain: SearchDomain::unit(2),
            kind: Kind::Constituent { h, locations },
            outer: None,
            optimum: 0.0,
            argmax: vec![0.0; 2],
        };
        let (x, v) = p.scan_optimum(200);
        p.optimum = v;
        p.argmax = x;
        Ok(p)
    }

    /// Grid scan over the (2-d) domain, then local polishing of the best
    /// grid points.
    fn scan_optimum(&self, per_axis: usize) -> (Vec<f64>, f64) {
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity((per_axis + 1).pow(2));
        for i in 0..=per_axis {
            for j in 0..=per_axis {
                let x = vec![i as f64 / per_axis as f64, j as f64 / per_axis as f64];
                scored.push((self.full(&x), x));
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let starts: Vec<Vec<f64>> = scored.iter().take(5).map(|s| s.1.clone()).collect();
        let m = maximize_deterministic(
            |x: &[f64], g: &mut [f64]| {
                self.full_grad(x, g);
                self.full(x)
            },
            &self.domain,
            &OptimizerConfig {
                restarts: 5,
                max_iterations: 500,
                gradient_tolerance: 1e-10,
                raw_samples: 0,
                ..OptimizerConfig::default()
            },
            &starts,
        );
        if m.value >= scored[0].0 {
            (m.x, m.value)
        } else {
            (scored[0].1.clone(), scored[0].0)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &SearchDomain<f64> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn surfaces(&self) -> Vec<Surface> {
        match self.kind {
            Kind::Square | Kind::Calibration { .. } => vec![Surface::Full, Surface::Inner],
            Kind::Queuing(_) => vec![Surface::Full, Surface::Fidelity],
            Kind::Constituent { .. } => vec![Surface::Full, Surface::Constituent],
        }
    }

    pub fn has(&self, s: Surface) -> bool {
        self.surfaces().contains(&s)
    }

    /// Known optimal value `f*`.
    pub fn optimum(&self) -> f64 {
        self.optimum
    }

    pub fn argmax(&self) -> &[f64] {
        &self.argmax
    }

    pub fn outer(&self) -> Option<&OuterFunction> {
        self.outer.as_ref()
    }

    /// Number of inner outputs (inner surface), fidelities or constituents.
    pub fn outputs(&self) -> usize {
        match &self.kind {
            Kind::Square => 1,
            Kind::Calibration { target, .. } => target.len(),
            Kind::Queuing(q) => q.horizons.len(),
            Kind::Constituent { locations, .. } => locations.len(),
        }
    }

    /// Target fidelity tag, for fidelity problems.
    pub fn target_tag(&self) -> Option<usize> {
        match &self.kind {
            Kind::Queuing(q) => Some(q.horizons.len() - 1),
            _ => None,
        }
    }

    /// Fidelity or constituent parameter `w` of a tag.
    pub fn tag_location(&self, tag: usize) -> Option<f64> {
        match &self.kind {
            Kind::Queuing(q) => q.horizons.get(tag).copied(),
            Kind::Constituent { locations, .. } => locations.get(tag).copied(),
            _ => None,
        }
    }

    pub fn full(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Square | Kind::Calibration { .. } => {
                let h = self.inner(x).expect("inner surface");
                self.outer.as_ref().expect("composite").eval(&h)
            }
            Kind::Queuing(q) => q.value(x[0], *q.horizons.last().expect("nonempty")),
            Kind::Constituent { locations, .. } => (0..locations.len())
                .map(|j| self.tagged(x, j).expect("constituent"))
                .sum(),
        }
    }

    /// Input gradient of [`Self::full`].
    pub fn full_grad(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::Square => {
                let h = (3.0 * x[0]).sin() + 0.6 * x[0];
                out[0] = -2.0 * h * (3.0 * (3.0 * x[0]).cos() + 0.6);
            }
            Kind::Calibration { h, target } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut g = vec![0.0; x.len()];
                for (j, t) in target.iter().enumerate() {
                    let r = h.eval(j, x) - t;
                    h.grad(j, x, &mut g);
                    for (o, gi) in out.iter_mut().zip(&g) {
                        *o -= 2.0 * r * gi;
                    }
                }
            }
            Kind::Queuing(q) => out[0] = q.derivative(x[0], *q.horizons.last().expect("nonempty")),
            Kind::Constituent { h, locations } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut g = vec![0.0; x.len() + 1];
                for &w in locations {
                    h.grad(0, &with_w(x, w), &mut g);
                    for (o, gi) in out.iter_mut().zip(&g) {
                        *o += gi;
                    }
                }
            }
        }
    }

    /// `h(x)` for composite problems.
    pub fn inner(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Square => Some(vec![(3.0 * x[0]).sin() + 0.6 * x[0]]),
            Kind::Calibration { h, target } => Some((0..target.len()).map(|j| h.eval(j, x)).collect()),
            _ => None,
        }
    }

    /// `h(x, w_tag)` for fidelity and constituent problems.
    pub fn tagged(&self, x: &[f64], tag: usize) -> Option<f64> {
        match &self.kind {
            Kind::Queuing(q) => q.horizons.get(tag).map(|&t| q.value(x[0], t)),
            Kind::Constituent { h, locations } => locations.get(tag).map(|&w| h.eval(0, &with_w(x, w))),
            _ => None,
        }
    }

    /// Cost of one query; `tag = None` is a full evaluation.
    pub fn cost(&self, _x: &[f64], tag: Option<usize>) -> f64 {
        match (&self.kind, tag) {
            (Kind::Queuing(q), t) => {
                let tf = *q.horizons.last().expect("nonempty");
                let h = t.map_or(tf, |t| q.horizons[t]);
                h / tf
            }
            (Kind::Constituent { locations, .. }, None) => locations.len() as f64,
            (Kind::Constituent { .. }, Some(_)) => 1.0,
            _ => 1.0,
        }
    }

    /// Weights of the objective as a linear functional of the tagged
    /// outputs, where it is one.
    pub fn functional_weights(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Constituent { locations, .. } => Some(vec![1.0; locations.len()]),
            Kind::Queuing(q) => {
                let mut p = vec![0.0; q.horizons.len()];
                *p.last_mut().expect("nonempty") = 1.0;
                Some(p)
            }
            _ => None,
        }
    }
}

fn with_w(x: &[f64], w: f64) -> Vec<f64> {
    let mut v = x.to_vec();
    v.push(w);
    v
}

/// Maximizer of the horizon-`t` queuing value by bisection on the
/// derivative, which is decreasing on the domain.
fn queuing_optimum(q: &QueuingParams, t: f64, lower: f64, upper: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (lower, upper);
    if q.derivative(lo, t) <= 0.0 {
        return (lo, q.value(lo, t));
    }
    if q.derivative(hi, t) >= 0.0 {
        return (hi, q.value(hi, t));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q.derivative(mid, t) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, q.value(x, t))
}
