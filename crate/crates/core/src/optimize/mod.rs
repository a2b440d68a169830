//! Acquisition maximizers: multistart projected quasi-Newton, multistart
//! stochastic gradient ascent, and the one-shot sample-average formulation.

mod local;
mod sga;

pub use local::{maximize_local, LocalOutcome, LocalSettings};
pub use sga::maximize_sga;

use crate::error::{Error, Result};
use crate::gp::SearchDomain;
use crate::qmc::ScrambledHalton;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    QuasiNewton,
    /// Learning rate `a / (b + t)`; `a = None` tunes it on the first restart.
    Sga { a: Option<f64>, b: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_rule: StepRule,
    pub seed: u64,
    /// Low-discrepancy points screened by value before choosing restart points.
    pub raw_samples: usize,
    /// Largest joint dimension accepted by [`maximize_one_shot`].
    pub one_shot_cap: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 100,
            gradient_tolerance: 1e-6,
            step_rule: StepRule::QuasiNewton,
            seed: 0,
            raw_samples: 256,
            one_shot_cap: 20_000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidArgument("gradient tolerance must be positive".into()));
        }
        if let StepRule::Sga { a, b } = self.step_rule {
            if a.is_some_and(|a| !(a > 0.0)) || !(b > 0.0) {
                return Err(Error::InvalidArgument("SGA learning rate must be positive".into()));
            }
        }
        Ok(())
    }

    fn local_settings(&self) -> LocalSettings {
        LocalSettings {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            ..LocalSettings::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Final value of every restart, in start order.
    pub restart_values: Vec<f64>,
    /// Final point of every restart, in start order.
    pub restart_points: Vec<Vec<f64>>,
    /// Set when every local search failed to take a step and the best start
    /// point is returned.
    pub all_failed: bool,
}

/// Restart points: `extra` first, then scrambled Halton points. When
/// `raw_samples` exceeds the number of Halton restarts, that many points are
/// screened and the best ones kept.
pub(crate) fn start_points<F>(
    value: &mut F,
    domain: &SearchDomain<f64>,
    config: &OptimizerConfig,
    extra: &[Vec<f64>],
) -> Vec<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut starts: Vec<Vec<f64>> = extra
        .iter()
        .map(|x| {
            let mut x = x.clone();
            domain.project(&mut x);
            x
        })
        .collect();
    let wanted = config.restarts.saturating_sub(starts.len()).max(1);
    let halton = ScrambledHalton::new(domain.dim().min(32), config.seed);
    let candidates = config.raw_samples.max(wanted);
    let mut pool: Vec<Vec<f64>> = (0..candidates as u64)
        .map(|i| {
            let mut u = halton.point(i);
            // Dimensions beyond the Halton table reuse shifted coordinates.
            while u.len() < domain.dim() {
                let k = u.len() % 32;
                let v = (u[k] + 0.618_033_988_749_895 * u.len() as f64).fract();
                u.push(v);
            }
            domain.from_unit(&u)
        })
        .collect();
    if candidates > wanted {
        let mut scored: Vec<(f64, usize)> = pool
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let v = value(x);
                (if v.is_nan() { f64::NEG_INFINITY } else { v }, i)
            })
            .collect();
        // Highest value first, lowest index on ties.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let keep: Vec<usize> = scored.iter().take(wanted).map(|&(_, i)| i).collect();
        pool = keep.into_iter().map(|i| pool[i].clone()).collect();
    } else {
        pool.truncate(wanted);
    }
    starts.extend(pool);
    starts
}

/// Multistart projected quasi-Newton maximization of a differentiable
/// function `f(x, grad) -> value`.
pub fn maximize_deterministic<F>(
    mut f: F,
    domain: &SearchDomain<f64>,
    config: &OptimizerConfig,
    extra_starts: &[Vec<f64>],
) -> Maximum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = domain.dim();
    let mut scratch = vec![0.0; d];
    let starts = {
        let mut value_only = |x: &[f64]| f(x, &mut scratch);
        start_points(&mut value_only, domain, config, extra_starts)
    };
    let settings = config.local_settings();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut restart_values = Vec::with_capacity(starts.len());
    let mut restart_points = Vec::with_capacity(starts.len());
    let mut all_failed = true;
    for start in &starts {
        let out = maximize_local(&mut f, start, domain, &settings);
        if out.iterations > 0 || out.converged {
            all_failed = false;
        }
        let v = if out.value.is_nan() { f64::NEG_INFINITY } else { out.value };
        restart_values.push(v);
        restart_points.push(out.x.clone());
        if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
            best = Some((v, out.x));
        }
    }
    let (value, x) = best.expect("at least one restart");
    Maximum {
        x,
        value,
        restart_values,
        restart_points,
        all_failed,
    }
}

/// One-shot maximization over the joint vector `(x, x'_1, .., x'_M)`.
///
/// `objective(z, grad)` is the deterministic sample-average objective on the
/// joint vector of length `d (M + 1)` (candidate first). `joint_starts` are
/// full joint vectors; more are generated from `domain` when fewer than
/// `config.restarts` are given. Returns the candidate component.
pub fn maximize_one_shot<F>(
    objective: F,
    domain: &SearchDomain<f64>,
    fantasies: usize,
    config: &OptimizerConfig,
    joint_starts: &[Vec<f64>],
) -> Result<Maximum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = domain.dim();
    let dim = d * (fantasies + 1);
    if dim > config.one_shot_cap {
        return Err(Error::OneShotTooLarge {
            dim,
            cap: config.one_shot_cap,
        });
    }
    if let Some(bad) = joint_starts.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let joint = joint_domain(domain, fantasies);
    let mut m = maximize_deterministic(objective, &joint, config, joint_starts);
    m.x.truncate(d);
    m.restart_points.iter_mut().for_each(|p| p.truncate(d));
    Ok(m)
}

/// `domain` repeated `fantasies + 1` times.
pub fn joint_domain(domain: &SearchDomain<f64>, fantasies: usize) -> SearchDomain<f64> {
    let reps = fantasies + 1;
    SearchDomain::new(domain.lower().repeat(reps), domain.upper().repeat(reps))
        .expect("repeated valid domain")
}
