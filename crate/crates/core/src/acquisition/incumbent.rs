use crate::error::{Error, Result};
use crate::gp::GpPosterior;

/// Best objective value found so far and where.
#[derive(Clone, Debug, PartialEq)]
pub struct Incumbent {
    pub value: f64,
    pub x: Vec<f64>,
}

impl Incumbent {
    /// Largest of `values`; ties go to the earliest record.
    pub fn best_observed(xs: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        let mut best: Option<usize> = None;
        for (i, v) in values.iter().enumerate() {
            if v.is_finite() && best.map_or(true, |b| *v > values[b]) {
                best = Some(i);
            }
        }
        let i = best.ok_or(Error::MissingIncumbent)?;
        Ok(Self {
            value: values[i],
            x: xs[i].clone(),
        })
    }

    /// Largest posterior mean over the evaluated points, the usual
    /// replacement for the best observation when observations are noisy.
    pub fn posterior_best(gp: &GpPosterior<f64>) -> Result<Self> {
        let means: Vec<f64> = gp.data().xs().iter().map(|x| gp.mean(x)).collect();
        Self::best_observed(gp.data().xs(), &means)
    }

    /// [`Self::best_observed`] when noiseless, [`Self::posterior_best`] otherwise.
    pub fn for_posterior(gp: &GpPosterior<f64>) -> Result<Self> {
        if gp.noise_variance() > 0.0 {
            Self::posterior_best(gp)
        } else {
            Self::best_observed(gp.data().xs(), gp.data().ys())
        }
    }
}
