//! Expected improvement for composite objectives `g(h(x))` by the
//! reparameterization `h(x) = mu_n(x) + C_n(x) Z`.

use crate::acquisition::kg::KgEstimate;
use crate::acquisition::{Incumbent, OuterFunction};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, JitterPolicy, Matrix};
use crate::multioutput::MoGpPosterior;

fn check(mo: &MoGpPosterior<f64>, draws: &Matrix<f64>) -> Result<()> {
    if draws.cols() != mo.outputs() {
        return Err(Error::DimensionMismatch {
            expected: mo.outputs(),
            got: draws.cols(),
        });
    }
    if draws.rows() == 0 {
        return Err(Error::InvalidArgument("at least one draw required".into()));
    }
    Ok(())
}

fn improvement(g: &OuterFunction, mean: &[f64], c: &Matrix<f64>, z: &[f64], best: f64) -> (f64, Vec<f64>) {
    let cz = c.matvec(z);
    let y: Vec<f64> = mean.iter().zip(&cz).map(|(m, v)| m + v).collect();
    ((g.eval(&y) - best).max(0.0), y)
}

/// Sample average `(1/M) sum_m (g(mu + C z_m) - f*)^+` over the rows of
/// `draws` (`M x k`).
pub fn eicf_value(mo: &MoGpPosterior<f64>, g: &OuterFunction, inc: &Incumbent, x: &[f64], draws: &Matrix<f64>) -> Result<f64> {
    Ok(eicf_estimate(mo, g, inc, x, draws)?.value)
}

/// [`eicf_value`] with its Monte-Carlo standard error.
pub fn eicf_estimate(
    mo: &MoGpPosterior<f64>,
    g: &OuterFunction,
    inc: &Incumbent,
    x: &[f64],
    draws: &Matrix<f64>,
) -> Result<KgEstimate> {
    check(mo, draws)?;
    let (mean, cov) = mo.mean_cov(x);
    let c = Cholesky::semidefinite(&cov)?.into_factor();
    let m = draws.rows() as f64;
    let samples: Vec<f64> = (0..draws.rows())
        .map(|s| improvement(g, &mean, &c, draws.row(s), inc.value).0)
        .collect();
    let mean_v = samples.iter().sum::<f64>() / m;
    let var = if draws.rows() > 1 {
        samples.iter().map(|v| (v - mean_v).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(KgEstimate {
        value: mean_v,
        std_error: (var / m).sqrt(),
    })
}

/// Mean, factor, mean Jacobian (`k x d`) and factor derivatives at `x`.
struct Local {
    mean: Vec<f64>,
    c: Matrix<f64>,
    dmean: Matrix<f64>,
    dc: Vec<Matrix<f64>>,
}

fn local(mo: &MoGpPosterior<f64>, x: &[f64]) -> Result<Local> {
    let (mean, mut cov, dmean, mut dcov) = mo.mean_cov_grad(x);
    for j in mo.zero_known_at(x, &mut cov) {
        for dc in dcov.iter_mut() {
            for l in 0..dc.rows() {
                dc[(j, l)] = 0.0;
                dc[(l, j)] = 0.0;
            }
        }
    }
    let chol = Cholesky::semidefinite(&cov)?;
    let dc = match dcov.iter().map(|d| chol.differential(d)).collect::<Result<Vec<_>>>() {
        Ok(v) => v,
        Err(_) => {
            // Singular factor: differentiate a jittered one instead.
            let scale = mo.model().variance_scale();
            let jittered = Cholesky::with_jitter(&cov, scale, JitterPolicy::default())
                .map_err(|_| Error::ZeroVariance)?;
            dcov.iter().map(|d| jittered.differential(d)).collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Local {
        mean,
        c: chol.into_factor(),
        dmean,
        dc,
    })
}

fn gradient_at(g: &OuterFunction, loc: &Local, z: &[f64], best: f64, out: &mut [f64]) -> f64 {
    let (imp, y) = improvement(g, &loc.mean, &loc.c, z, best);
    if imp <= 0.0 {
        return 0.0;
    }
    let k = y.len();
    let mut gy = vec![0.0; k];
    g.grad(&y, &mut gy);
    for (i, o) in out.iter_mut().enumerate() {
        let dcz = loc.dc[i].matvec(z);
        let mut s = 0.0;
        for j in 0..k {
            s += gy[j] * (loc.dmean[(j, i)] + dcz[j]);
        }
        *o += s;
    }
    imp
}

/// One sample of the unbiased gradient estimator: the gradient of
/// `g(mu_n(x) + C_n(x) z)` if it improves on the incumbent, else zero.
pub fn eicf_gradient_sample(
    mo: &MoGpPosterior<f64>,
    g: &OuterFunction,
    inc: &Incumbent,
    x: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    if z.len() != mo.outputs() {
        return Err(Error::DimensionMismatch {
            expected: mo.outputs(),
            got: z.len(),
        });
    }
    let loc = local(mo, x)?;
    let mut out = vec![0.0; x.len()];
    gradient_at(g, &loc, z, inc.value, &mut out);
    Ok(out)
}

/// Sample-average value and gradient with fixed draws.
pub fn eicf_value_grad(
    mo: &MoGpPosterior<f64>,
    g: &OuterFunction,
    inc: &Incumbent,
    x: &[f64],
    draws: &Matrix<f64>,
) -> Result<(f64, Vec<f64>)> {
    check(mo, draws)?;
    let loc = local(mo, x)?;
    let mut grad = vec![0.0; x.len()];
    let mut total = 0.0;
    for s in 0..draws.rows() {
        total += gradient_at(g, &loc, draws.row(s), inc.value, &mut grad);
    }
    let m = draws.rows() as f64;
    grad.iter_mut().for_each(|v| *v /= m);
    Ok((total / m, grad))
}
