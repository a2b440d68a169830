use crate::acquisition::Incumbent;
use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::normal;

/// `E[(Y - f*)^+]` for `Y ~ N(f* + delta, sigma^2)`.
pub fn ei_from_moments(delta: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return delta.max(0.0);
    }
    let u = delta / sigma;
    (delta * normal::cdf(u) + sigma * normal::pdf(u)).max(0.0)
}

/// Closed-form expected improvement over `inc.value`.
pub fn ei_analytic(gp: &GpPosterior<f64>, inc: &Incumbent, x: &[f64]) -> f64 {
    let (m, v) = gp.mean_variance(x);
    ei_from_moments(m - inc.value, v.sqrt())
}

/// Exact input gradient of [`ei_analytic`]. Fails where the posterior
/// variance vanishes.
pub fn ei_gradient(gp: &GpPosterior<f64>, inc: &Incumbent, x: &[f64]) -> Result<Vec<f64>> {
    let (value, grad) = ei_value_grad(gp, inc, x);
    if value.is_nan() {
        return Err(Error::ZeroVariance);
    }
    grad.ok_or(Error::ZeroVariance)
}

/// Value and, when the variance is positive, gradient.
pub fn ei_value_grad(gp: &GpPosterior<f64>, inc: &Incumbent, x: &[f64]) -> (f64, Option<Vec<f64>>) {
    let (m, v, mg, vg) = gp.mean_variance_grad(x);
    let delta = m - inc.value;
    if !(v > gp.jitter()) {
        return (delta.max(0.0), None);
    }
    let sigma = v.sqrt();
    let u = delta / sigma;
    let (cdf, pdf) = (normal::cdf(u), normal::pdf(u));
    let value = delta * cdf + sigma * pdf;
    let grad = mg
        .iter()
        .zip(&vg)
        .map(|(dm, dv)| cdf * dm + pdf * dv / (2.0 * sigma))
        .collect();
    (value.max(0.0), Some(grad))
}
