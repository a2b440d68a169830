use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gp::{FitOptions, MeanOption, NoiseOption, SearchDomain};
use crate::linalg::{dot, Cholesky, JitterPolicy, Matrix};
use crate::multioutput::{HyperKind, MultiOutputModel, TaggedDataset};
use crate::optimize::{maximize_local, LocalSettings};
use crate::qmc::ScrambledHalton;

const LOG_BOX: f64 = 6.907_755_278_982_137; // ln(1e3)
const NOISE_BOUNDS: (f64, f64) = (1e-9, 10.0);

#[derive(Clone, Debug)]
pub struct MoFitResult {
    pub model: MultiOutputModel<f64>,
    /// Per-output noise variance, in data units.
    pub noise: Vec<f64>,
    pub log_likelihood: f64,
    /// Optimum in standardized log space; usable as a warm start.
    pub theta: Vec<f64>,
    pub warning: bool,
}

/// Joint log marginal likelihood of all tagged rows under the prior.
pub fn mo_log_marginal_likelihood(
    model: &MultiOutputModel<f64>,
    data: &TaggedDataset<f64>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidDataset("log likelihood of an empty dataset".into()));
    }
    let rows = data.records();
    let n = rows.len();
    let mut gram = Matrix::from_fn(n, n, |a, b| {
        model.prior_cov(&rows[a].x, rows[a].tag, &rows[b].x, rows[b].tag)
    });
    for (i, r) in rows.iter().enumerate() {
        gram[(i, i)] += data.noise()[r.tag];
    }
    let chol = Cholesky::with_jitter(&gram, model.variance_scale(), JitterPolicy::default())?;
    let r: Vec<f64> = rows.iter().map(|r| r.y - model.prior_mean(&r.x, r.tag)).collect();
    let w = chol.solve_lower(&r);
    Ok(-0.5 * dot(&w, &w) - 0.5 * chol.log_det() - 0.5 * n as f64 * (2.0 * PI).ln())
}

/// Maximum-likelihood fit of every hyperparameter of `template` (its current
/// values are only used for structure). Outputs are standardized jointly;
/// constant means are profiled out by generalized least squares.
pub fn fit_multioutput(
    template: &MultiOutputModel<f64>,
    data: &TaggedDataset<f64>,
    opts: &FitOptions,
) -> Result<MoFitResult> {
    if data.len() < 2 {
        return Err(Error::InvalidDataset("fitting needs at least two records".into()));
    }
    let d = template.input_dim();
    let mut ranges: Vec<f64> = (0..d)
        .map(|i| {
            let (lo, hi) = data
                .records()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r.x[i]), hi.max(r.x[i]))
                });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    if let MultiOutputModel::Augmented { locations, .. } = template {
        let lo = locations.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = locations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ranges.push(if hi > lo { hi - lo } else { 1.0 });
    }

    let ys: Vec<f64> = data.records().iter().map(|r| r.y).collect();
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
    let shift = match opts.mean {
        MeanOption::Constant => ybar,
        MeanOption::Zero => 0.0,
    };
    let scale = ystd;
    let mut std_data = TaggedDataset::new(data.noise().iter().map(|v| v / (scale * scale)).collect())?;
    for r in data.records() {
        std_data.push(r.x.clone(), r.tag, (r.y - shift) / scale, r.cost)?;
    }
    let base = template.with_mean_coefficients(&vec![0.0; template.n_mean_coefficients()]);
    let problem = Standardized {
        template: match opts.mean {
            MeanOption::Constant => base,
            MeanOption::Zero => zero_means(&base),
        },
        data: std_data,
        fixed_noise: match opts.noise {
            NoiseOption::Fixed(v) => Some(v / (scale * scale)),
            NoiseOption::Learn => None,
        },
        constant_mean: opts.mean == MeanOption::Constant,
    };

    let kinds = template.hyper_kinds();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut init_lo = Vec::new();
    let mut init_hi = Vec::new();
    for kind in &kinds {
        let (b, i) = match *kind {
            HyperKind::LogLengthscale(i) => {
                let r = ranges[i].ln();
                (
                    (r - LOG_BOX, r + LOG_BOX),
                    (r + 0.05f64.ln(), r + 2.0f64.ln()),
                )
            }
            HyperKind::LogScale => ((-LOG_BOX, LOG_BOX), (0.2f64.ln(), 5.0f64.ln())),
            HyperKind::LogFactorDiagonal => (
                (-0.5 * LOG_BOX, 0.5 * LOG_BOX),
                (0.3f64.ln(), 2.0f64.ln()),
            ),
            HyperKind::FactorOffDiagonal => ((-31.6, 31.6), (-1.0, 1.0)),
        };
        lower.push(b.0);
        upper.push(b.1);
        init_lo.push(i.0);
        init_hi.push(i.1);
    }
    if problem.fixed_noise.is_none() {
        lower.push(NOISE_BOUNDS.0.ln());
        upper.push(NOISE_BOUNDS.1.ln());
        init_lo.push(1e-6f64.ln());
        init_hi.push(1e-1f64.ln());
    }
    let n_theta = lower.len();
    let bounds = SearchDomain::new(lower, upper)?;
    let halton = ScrambledHalton::new(n_theta.min(32), opts.seed);
    let mut starts: Vec<Vec<f64>> = (0..opts.restarts.max(1) as u64)
        .map(|s| {
            let u = halton.point(s);
            (0..n_theta)
                .map(|i| {
                    let t = u[i % u.len()];
                    init_lo[i] + t * (init_hi[i] - init_lo[i])
                })
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
        let v0 = problem.value_grad(start, None);
        if !v0.is_finite() {
            continue;
        }
        if best_start.as_ref().map_or(true, |(v, _)| v0 > *v) {
            best_start = Some((v0, start.clone()));
        }
        let out = maximize_local(
            |th: &[f64], g: &mut [f64]| problem.value_grad(th, Some(g)),
            start,
            &bounds,
            &settings,
        );
        if out.value > v0 {
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

    let (model_std, noise_std) = problem.unpack(&theta)?;
    let beta = if problem.constant_mean {
        problem.profiled_beta(&model_std, &noise_std)?.0
    } else {
        vec![0.0; template.n_mean_coefficients()]
    };
    // Back to data units.
    let k = model_std.n_hyper();
    let mut th = theta[..k].to_vec();
    for (t, kind) in th.iter_mut().zip(&kinds) {
        match kind {
            HyperKind::LogScale => *t += 2.0 * scale.ln(),
            HyperKind::LogFactorDiagonal => *t += scale.ln(),
            HyperKind::FactorOffDiagonal => *t *= scale,
            HyperKind::LogLengthscale(_) => {}
        }
    }
    let scaled_beta: Vec<f64> = beta.iter().map(|b| b * scale).collect();
    let model = template
        .with_log_hyper(&th)?
        .with_mean_coefficients(&scaled_beta)
        .with_mean_shift(shift);
    let model = if problem.constant_mean {
        model
    } else {
        zero_means(&model)
    };
    let noise = noise_std.iter().map(|v| v * scale * scale).collect();
    Ok(MoFitResult {
        model,
        noise,
        log_likelihood: lml_std - n * scale.ln(),
        theta,
        warning,
    })
}

fn zero_means(model: &MultiOutputModel<f64>) -> MultiOutputModel<f64> {
    let mut m = model.clone();
    use crate::gp::MeanFunction::Zero;
    match &mut m {
        MultiOutputModel::Independent { means, .. }
        | MultiOutputModel::Coregionalized { means, .. } => means.iter_mut().for_each(|v| *v = Zero),
        MultiOutputModel::LatentFactor {
            target_mean,
            bias_means,
            ..
        } => {
            *target_mean = Zero;
            bias_means.iter_mut().for_each(|v| *v = Zero);
        }
        MultiOutputModel::Augmented { mean, .. } => *mean = Zero,
    }
    m
}

struct Standardized {
    template: MultiOutputModel<f64>,
    data: TaggedDataset<f64>,
    fixed_noise: Option<f64>,
    constant_mean: bool,
}

impl Standardized {
    fn unpack(&self, theta: &[f64]) -> Result<(MultiOutputModel<f64>, Vec<f64>)> {
        let k = self.template.n_hyper();
        let model = self.template.with_log_hyper(&theta[..k])?;
        let noise = match self.fixed_noise {
            Some(v) => vec![v; self.data.outputs()],
            None => vec![theta[k].exp(); self.data.outputs()],
        };
        Ok((model, noise))
    }

    fn factor(&self, model: &MultiOutputModel<f64>, noise: &[f64]) -> Result<Cholesky<f64>> {
        let rows = self.data.records();
        let n = rows.len();
        let mut gram = Matrix::from_fn(n, n, |a, b| {
            model.prior_cov(&rows[a].x, rows[a].tag, &rows[b].x, rows[b].tag)
        });
        for (i, r) in rows.iter().enumerate() {
            gram[(i, i)] += noise[r.tag];
        }
        Cholesky::with_jitter(&gram, model.variance_scale(), JitterPolicy::default())
    }

    /// GLS mean coefficients and the factor they were computed with.
    fn profiled_beta(
        &self,
        model: &MultiOutputModel<f64>,
        noise: &[f64],
    ) -> Result<(Vec<f64>, Cholesky<f64>)> {
        let chol = self.factor(model, noise)?;
        let q = model.n_mean_coefficients();
        let rows = self.data.records();
        let h = Matrix::from_fn(rows.len(), q, |i, c| model.mean_basis(rows[i].tag)[c]);
        let kinv_h = chol.solve_matrix(&h);
        let a = h.transpose().matmul(&kinv_h);
        let ys: Vec<f64> = rows.iter().map(|r| r.y).collect();
        let rhs = kinv_h.tr_matvec(&ys);
        // Outputs with no rows leave A singular; a tiny ridge pins them at 0.
        let mut a = a;
        a.add_to_diagonal(1e-10 * (1.0 + a.max_diagonal()));
        let ac = Cholesky::try_factor(&a).ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
        Ok((ac.solve(&rhs), chol))
    }

    fn value_grad(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let Ok((model, noise)) = self.unpack(theta) else {
            return f64::NEG_INFINITY;
        };
        let rows = self.data.records();
        let (beta, chol) = if self.constant_mean {
            match self.profiled_beta(&model, &noise) {
                Ok(v) => v,
                Err(_) => return f64::NEG_INFINITY,
            }
        } else {
            match self.factor(&model, &noise) {
                Ok(c) => (vec![0.0; model.n_mean_coefficients()], c),
                Err(_) => return f64::NEG_INFINITY,
            }
        };
        let r: Vec<f64> = rows
            .iter()
            .map(|row| r_minus(row.y, &model.mean_basis(row.tag), &beta))
            .collect();
        let alpha = chol.solve(&r);
        let n = r.len();
        let value =
            -0.5 * dot(&r, &alpha) - 0.5 * chol.log_det() - 0.5 * n as f64 * (2.0 * PI).ln();
        if let Some(g) = grad {
            let kinv = chol.inverse();
            let w = Matrix::from_fn(n, n, |i, j| alpha[i] * alpha[j] - kinv[(i, j)]);
            g.iter_mut().for_each(|v| *v = 0.0);
            let k = model.n_hyper();
            let mut hg = vec![0.0; k];
            for i in 0..n {
                for j in 0..=i {
                    model.prior_cov_hyper_grad(&rows[i].x, rows[i].tag, &rows[j].x, rows[j].tag, &mut hg);
                    let f = if i == j { 0.5 } else { 1.0 } * w[(i, j)];
                    for p in 0..k {
                        g[p] += f * hg[p];
                    }
                }
            }
            if theta.len() > k {
                let tr: f64 = (0..n).map(|i| w[(i, i)]).sum();
                g[k] = 0.5 * tr * theta[k].exp();
            }
        }
        value
    }
}

fn r_minus(y: f64, basis: &[f64], beta: &[f64]) -> f64 {
    y - dot(basis, beta)
}
