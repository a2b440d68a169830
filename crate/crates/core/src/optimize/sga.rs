use crate::gp::SearchDomain;
use crate::optimize::{start_points, Maximum, OptimizerConfig, StepRule};
use crate::qmc::{self, Rng};

const TUNING_STEPS: usize = 25;
const TUNING_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Multistart projected stochastic gradient ascent.
///
/// `sampler(x, rng, grad)` writes one unbiased gradient sample at `x`.
/// Each restart runs `x_{t+1} = P(x_t + a / (b + t) g_t)`; the final
/// iterates are ranked by `evaluate`, typically a high-sample Monte-Carlo
/// estimate of the acquisition. Restarts whose gradient sample turns
/// non-finite are aborted at their last finite iterate.
pub fn maximize_sga<S, V>(
    mut sampler: S,
    mut evaluate: V,
    domain: &SearchDomain<f64>,
    config: &OptimizerConfig,
    extra_starts: &[Vec<f64>],
) -> Maximum
where
    S: FnMut(&[f64], &mut Rng, &mut [f64]),
    V: FnMut(&[f64]) -> f64,
{
    let (a, b) = match config.step_rule {
        StepRule::Sga { a, b } => (a, b),
        StepRule::QuasiNewton => (None, 1.0),
    };
    let starts = start_points(&mut evaluate, domain, config, extra_starts);
    let width = domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(l, u)| u - l)
        .fold(0.0, f64::max);

    let a = match a {
        Some(a) => a,
        None => {
            // Short bracketing pass from the first start.
            let mut best = (f64::NEG_INFINITY, TUNING_GRID[0] * width);
            for (k, scale) in TUNING_GRID.iter().enumerate() {
                let cand = scale * width;
                let mut rng = qmc::rng(config.seed, 1_000 + k as u64);
                let x = run(&mut sampler, &starts[0], domain, cand, b, TUNING_STEPS, &mut rng);
                let v = evaluate(&x);
                if v > best.0 {
                    best = (v, cand);
                }
            }
            best.1
        }
    };

    let mut restart_values = Vec::with_capacity(starts.len());
    let mut restart_points = Vec::with_capacity(starts.len());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (r, start) in starts.iter().enumerate() {
        let mut rng = qmc::rng(config.seed, r as u64);
        let x = run(&mut sampler, start, domain, a, b, config.max_iterations, &mut rng);
        let v = evaluate(&x);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        restart_values.push(v);
        restart_points.push(x.clone());
        if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
            best = Some((v, x));
        }
    }
    let (value, x) = best.expect("at least one restart");
    Maximum {
        x,
        value,
        restart_values,
        restart_points,
        all_failed: false,
    }
}

fn run<S>(
    sampler: &mut S,
    start: &[f64],
    domain: &SearchDomain<f64>,
    a: f64,
    b: f64,
    steps: usize,
    rng: &mut Rng,
) -> Vec<f64>
where
    S: FnMut(&[f64], &mut Rng, &mut [f64]),
{
    let mut x = start.to_vec();
    domain.project(&mut x);
    let mut g = vec![0.0; x.len()];
    for t in 0..steps {
        sampler(&x, rng, &mut g);
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let lr = a / (b + t as f64);
        let mut next: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + lr * gi).collect();
        domain.project(&mut next);
        x = next;
    }
    x
}
