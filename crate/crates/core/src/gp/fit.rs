//! Log marginal likelihood and maximum-likelihood hyperparameter fitting.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gp::{Dataset, Kernel, KernelFamily, MeanFunction, SearchDomain};
use crate::linalg::{dot, Cholesky, JitterPolicy, Matrix};
use crate::optimize::{maximize_local, LocalSettings};
use crate::qmc::ScrambledHalton;
use crate::scalar::Real;

/// Multivariate normal log density of the observations under the prior.
pub fn log_marginal_likelihood<T: Real>(
    kernel: &Kernel<T>,
    mean: &MeanFunction<T>,
    data: &Dataset<T>,
) -> Result<T> {
    if data.is_empty() {
        return Err(Error::InvalidDataset("log likelihood of an empty dataset".into()));
    }
    let mut gram = kernel.gram(data.xs());
    gram.add_to_diagonal(data.noise_variance());
    let chol = Cholesky::with_jitter(&gram, kernel.output_scale(), JitterPolicy::default())?;
    let resid: Vec<T> = data
        .xs()
        .iter()
        .zip(data.ys())
        .map(|(x, &y)| y - mean.eval(x))
        .collect();
    let w = chol.solve_lower(&resid);
    let n = T::lit(data.len() as f64);
    let half = T::lit(0.5);
    Ok(-half * dot(&w, &w) - half * chol.log_det() - half * n * T::lit((2.0 * PI).ln()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseOption {
    /// Fixed noise variance, in the data's output units.
    Fixed(f64),
    /// Fitted by maximum likelihood.
    Learn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanOption {
    Zero,
    /// Constant mean, profiled out by generalized least squares.
    Constant,
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub noise: NoiseOption,
    pub mean: MeanOption,
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Log-parameter vector (standardized units) to add as an extra start.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            noise: NoiseOption::Learn,
            mean: MeanOption::Constant,
            restarts: 8,
            seed: 0,
            max_iterations: 200,
            warm_start: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub kernel: Kernel<f64>,
    pub mean: MeanFunction<f64>,
    pub noise_variance: f64,
    pub log_likelihood: f64,
    /// Optimum in standardized log space; usable as a warm start.
    pub theta: Vec<f64>,
    /// Set when no restart improved on its starting point.
    pub warning: bool,
}

// Bounds relative to the standardized data.
const LOG_BOX: f64 = 6.907_755_278_982_137; // ln(1e3)
const NOISE_BOUNDS: (f64, f64) = (1e-9, 10.0);

/// Maximum-likelihood fit with the default options.
pub fn fit_hyperparameters(
    data: &Dataset<f64>,
    family: KernelFamily,
    restarts: usize,
    seed: u64,
) -> Result<FitResult> {
    fit_with_options(
        data,
        family,
        &FitOptions {
            restarts,
            seed,
            ..FitOptions::default()
        },
    )
}

/// Inputs are scaled by their per-dimension range and outputs standardized;
/// hyperparameters are optimized in log space inside `[1e-3, 1e3]` of those
/// scales, from scrambled Halton starts, and mapped back to data units.
pub fn fit_with_options(
    data: &Dataset<f64>,
    family: KernelFamily,
    opts: &FitOptions,
) -> Result<FitResult> {
    if data.len() < 2 {
        return Err(Error::InvalidDataset("fitting needs at least two records".into()));
    }
    let d = data.dim().unwrap_or(0);
    let ranges: Vec<f64> = (0..d)
        .map(|i| {
            let (lo, hi) = data
                .xs()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x[i]), hi.max(x[i]))
                });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    let ys = data.ys();
    let n = ys.len() as f64;
    let ybar = ys.iter().sum::<f64>() / n;
    let ystd = {
        let v = ys.iter().map(|y| (y - ybar).powi(2)).sum::<f64>() / n;
        if v > 0.0 {
            v.sqrt()
        } else {
            1.0
        }
    };
    let (shift, scale) = match opts.mean {
        MeanOption::Constant => (ybar, ystd),
        MeanOption::Zero => (0.0, ystd),
    };
    let problem = Standardized {
        xs: data
            .xs()
            .iter()
            .map(|x| x.iter().zip(&ranges).map(|(v, r)| v / r).collect())
            .collect(),
        ys: ys.iter().map(|y| (y - shift) / scale).collect(),
        family,
        noise: match opts.noise {
            NoiseOption::Fixed(v) => Some(v / (scale * scale)),
            NoiseOption::Learn => None,
        },
        constant_mean: opts.mean == MeanOption::Constant,
    };

    let n_theta = problem.n_theta();
    let mut lower = vec![-LOG_BOX; d + 1];
    let mut upper = vec![LOG_BOX; d + 1];
    if problem.noise.is_none() {
        lower.push(NOISE_BOUNDS.0.ln());
        upper.push(NOISE_BOUNDS.1.ln());
    }
    let bounds = SearchDomain::new(lower, upper)?;

    // Starts are spread over a narrower box of plausible values.
    let mut init_lo = vec![(0.05f64).ln(); d];
    let mut init_hi = vec![(2.0f64).ln(); d];
    init_lo.push((0.2f64).ln());
    init_hi.push((5.0f64).ln());
    if problem.noise.is_none() {
        init_lo.push((1e-6f64).ln());
        init_hi.push((1e-1f64).ln());
    }
    let halton = ScrambledHalton::new(n_theta, opts.seed);
    let mut starts: Vec<Vec<f64>> = (0..opts.restarts.max(1) as u64)
        .map(|i| {
            halton
                .point(i)
                .iter()
                .zip(init_lo.iter().zip(&init_hi))
                .map(|(t, (lo, hi))| lo + t * (hi - lo))
                .collect()
        })
        .collect();
    if let Some(w) = &opts.warm_start {
        if w.len() == n_theta {
            let mut w = w.clone();
            bounds.project(&mut w);
            starts.insert(0, w);
        }
    }

    let settings = LocalSettings {
        max_iterations: opts.max_iterations,
        gradient_tolerance: 1e-6,
        ..LocalSettings::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut best_start: Option<(f64, Vec<f64>)> = None;
    let mut any_improved = false;
    for start in &starts {
        let start_value = problem.value_grad(start, None);
        if start_value.is_finite()
            && best_start.as_ref().map_or(true, |(v, _)| start_value > *v)
        {
            best_start = Some((start_value, start.clone()));
        }
        if !start_value.is_finite() {
            continue;
        }
        let out = maximize_local(
            |th: &[f64], g: &mut [f64]| problem.value_grad(th, Some(g)),
            start,
            &bounds,
            &settings,
        );
        if out.value > start_value {
            any_improved = true;
        }
        if out.value.is_finite() && best.as_ref().map_or(true, |(v, _)| out.value > *v) {
            best = Some((out.value, out.x));
        }
    }
    let warning = !any_improved;
    let (lml_std, theta) = match (best, best_start) {
        (Some(b), _) if any_improved => b,
        (_, Some(s)) => s,
        _ => return Err(Error::NotPositiveDefinite { jitter: 1e-4 }),
    };

    let (kernel_std, mean_std, noise_std) = problem.unpack(&theta)?;
    let lengthscales = kernel_std
        .lengthscales()
        .iter()
        .zip(&ranges)
        .map(|(l, r)| l * r)
        .collect();
    let kernel = Kernel::new(family, lengthscales, kernel_std.output_scale() * scale * scale)?;
    let mean = match opts.mean {
        MeanOption::Zero => MeanFunction::Zero,
        MeanOption::Constant => MeanFunction::Constant(shift + scale * mean_std),
    };
    let noise_variance = match opts.noise {
        NoiseOption::Fixed(v) => v,
        NoiseOption::Learn => noise_std * scale * scale,
    };
    // Jacobian of the standardization.
    let log_likelihood = lml_std - n * scale.ln();
    Ok(FitResult {
        kernel,
        mean,
        noise_variance,
        log_likelihood,
        theta,
        warning,
    })
}

struct Standardized {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    family: KernelFamily,
    noise: Option<f64>,
    constant_mean: bool,
}

impl Standardized {
    fn dim(&self) -> usize {
        self.xs[0].len()
    }

    fn n_theta(&self) -> usize {
        self.dim() + 1 + usize::from(self.noise.is_none())
    }

    fn unpack(&self, theta: &[f64]) -> Result<(Kernel<f64>, f64, f64)> {
        let d = self.dim();
        let kernel = Kernel::new(
            self.family,
            theta[..d].iter().map(|t| t.exp()).collect(),
            theta[d].exp(),
        )?;
        let noise = match self.noise {
            Some(v) => v,
            None => theta[d + 1].exp(),
        };
        let mean = if self.constant_mean {
            self.profiled_mean(&kernel, noise)?.0
        } else {
            0.0
        };
        Ok((kernel, mean, noise))
    }

    fn factor(&self, kernel: &Kernel<f64>, noise: f64) -> Result<Cholesky<f64>> {
        let mut gram = kernel.gram(&self.xs);
        gram.add_to_diagonal(noise);
        Cholesky::with_jitter(&gram, kernel.output_scale(), JitterPolicy::default())
    }

    fn profiled_mean(&self, kernel: &Kernel<f64>, noise: f64) -> Result<(f64, Cholesky<f64>)> {
        let chol = self.factor(kernel, noise)?;
        let ones = vec![1.0; self.ys.len()];
        let kinv_one = chol.solve(&ones);
        let c = dot(&kinv_one, &self.ys) / dot(&kinv_one, &ones);
        Ok((c, chol))
    }

    /// Profile log likelihood and its gradient in log-parameter space.
    /// Returns `-inf` when the Gram matrix cannot be factored.
    fn value_grad(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let d = self.dim();
        let Ok(kernel) = Kernel::new(
            self.family,
            theta[..d].iter().map(|t| t.exp()).collect(),
            theta[d].exp(),
        ) else {
            return f64::NEG_INFINITY;
        };
        let noise = match self.noise {
            Some(v) => v,
            None => theta[d + 1].exp(),
        };
        let (c, chol) = if self.constant_mean {
            match self.profiled_mean(&kernel, noise) {
                Ok(v) => v,
                Err(_) => return f64::NEG_INFINITY,
            }
        } else {
            match self.factor(&kernel, noise) {
                Ok(ch) => (0.0, ch),
                Err(_) => return f64::NEG_INFINITY,
            }
        };
        let r: Vec<f64> = self.ys.iter().map(|y| y - c).collect();
        let alpha = chol.solve(&r);
        let n = r.len();
        let value = -0.5 * dot(&r, &alpha) - 0.5 * chol.log_det() - 0.5 * n as f64 * (2.0 * PI).ln();
        if let Some(g) = grad {
            // dL/dtheta = 1/2 tr((alpha alpha^T - K^{-1}) dK/dtheta); the
            // profiled mean contributes nothing at its optimum.
            let kinv = chol.inverse();
            let w = Matrix::from_fn(n, n, |i, j| alpha[i] * alpha[j] - kinv[(i, j)]);
            g.iter_mut().for_each(|v| *v = 0.0);
            let mut hg = vec![0.0; d + 1];
            for i in 0..n {
                for j in 0..i {
                    kernel.hyper_grad(&self.xs[i], &self.xs[j], &mut hg);
                    let wij = w[(i, j)];
                    for p in 0..=d {
                        g[p] += wij * hg[p];
                    }
                }
            }
            let diag_trace: f64 = (0..n).map(|i| w[(i, i)]).sum();
            g[d] += 0.5 * diag_trace * kernel.output_scale();
            if self.noise.is_none() {
                g[d + 1] = 0.5 * diag_trace * noise;
            }
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset<f64> {
        let xs: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![i as f64 / 11.0, ((i * 7) % 12) as f64 / 11.0])
            .collect();
        let ys = xs.iter().map(|x| (3.0 * x[0]).sin() + x[1] * x[1]).collect();
        Dataset::from_records(xs, ys, 0.0).unwrap()
    }

    #[test]
    fn single_point_density() {
        let data = Dataset::from_records(vec![vec![0.0]], vec![0.0], 1.0).unwrap();
        let k = Kernel::isotropic(KernelFamily::SquaredExponential, 1, 1.0).unwrap();
        let v = log_marginal_likelihood(&k, &MeanFunction::Zero, &data).unwrap();
        assert!((v - (-0.5 * (2.0 * PI * 2.0).ln())).abs() < 1e-7);
    }

    #[test]
    fn profile_gradient_matches_finite_differences() {
        let data = toy();
        let p = Standardized {
            xs: data.xs().to_vec(),
            ys: data.ys().to_vec(),
            family: KernelFamily::Matern52,
            noise: None,
            constant_mean: true,
        };
        let theta = vec![-0.7, -0.2, 0.3, -4.0];
        let mut g = vec![0.0; 4];
        p.value_grad(&theta, Some(&mut g));
        for i in 0..4 {
            let h = 1e-5;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (p.value_grad(&tp, None) - p.value_grad(&tm, None)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn fit_improves_and_reports_consistent_likelihood() {
        let data = toy();
        let fit = fit_hyperparameters(&data, KernelFamily::Matern52, 4, 1).unwrap();
        assert!(!fit.warning);
        let direct = log_marginal_likelihood(
            &fit.kernel,
            &fit.mean,
            &data.with_noise_variance(fit.noise_variance),
        )
        .unwrap();
        assert!((direct - fit.log_likelihood).abs() < 1e-6 * (1.0 + direct.abs()));
    }

    #[test]
    fn needs_two_records() {
        let data = Dataset::from_records(vec![vec![0.0]], vec![1.0], 0.0).unwrap();
        assert!(fit_hyperparameters(&data, KernelFamily::Matern52, 2, 0).is_err());
    }
}
