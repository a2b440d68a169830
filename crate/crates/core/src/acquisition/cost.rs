use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gp::{fit_hyperparameters, Dataset, GpPosterior, KernelFamily};

/// Closed-form evaluation cost `c(x, tag)`.
pub trait CostFunction: Send + Sync {
    fn cost(&self, x: &[f64], tag: usize) -> f64;

    /// Input gradient; zero by default.
    fn grad(&self, _x: &[f64], _tag: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Cost depending only on the tag.
#[derive(Clone, Debug, PartialEq)]
pub struct TagCost(pub Vec<f64>);

impl CostFunction for TagCost {
    fn cost(&self, _x: &[f64], tag: usize) -> f64 {
        self.0[tag]
    }
}

#[derive(Clone)]
pub enum CostModel {
    Known(Arc<dyn CostFunction>),
    /// GP on `log c` over `(x, location[tag])`; predictions use the
    /// posterior median `exp(mu_n)`.
    LogGp {
        gp: GpPosterior<f64>,
        locations: Vec<f64>,
    },
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostModel::Known(_) => f.write_str("Known"),
            CostModel::LogGp { locations, .. } => {
                f.debug_struct("LogGp").field("locations", locations).finish()
            }
        }
    }
}

impl CostModel {
    pub fn known(c: impl CostFunction + 'static) -> Self {
        CostModel::Known(Arc::new(c))
    }

    /// Fits the log-cost GP to observed `(x, tag, cost)` triples.
    pub fn fit_log_gp(
        records: &[(Vec<f64>, usize, f64)],
        locations: Vec<f64>,
        family: KernelFamily,
        seed: u64,
    ) -> Result<Self> {
        let mut data = Dataset::new(0.0)?;
        for (x, tag, c) in records {
            if !(*c > 0.0) {
                return Err(Error::NonPositiveCost(*c));
            }
            data.push(augment(x, locations[*tag]), c.ln())?;
        }
        let fit = fit_hyperparameters(&data, family, 4, seed)?;
        let gp = GpPosterior::new(fit.kernel, fit.mean, data.with_noise_variance(fit.noise_variance))?;
        Ok(CostModel::LogGp { gp, locations })
    }

    pub fn predict(&self, x: &[f64], tag: usize) -> Result<f64> {
        let c = match self {
            CostModel::Known(f) => f.cost(x, tag),
            CostModel::LogGp { gp, locations } => gp.mean(&augment(x, locations[tag])).exp(),
        };
        if c > 0.0 && c.is_finite() {
            Ok(c)
        } else {
            Err(Error::NonPositiveCost(c))
        }
    }

    pub fn predict_grad(&self, x: &[f64], tag: usize) -> Result<(f64, Vec<f64>)> {
        let c = self.predict(x, tag)?;
        let mut g = vec![0.0; x.len()];
        match self {
            CostModel::Known(f) => f.grad(x, tag, &mut g),
            CostModel::LogGp { gp, locations } => {
                let (_, _, mg, _) = gp.mean_variance_grad(&augment(x, locations[tag]));
                for (o, v) in g.iter_mut().zip(mg) {
                    *o = c * v;
                }
            }
        }
        Ok((c, g))
    }
}

fn augment(x: &[f64], w: f64) -> Vec<f64> {
    let mut v = x.to_vec();
    v.push(w);
    v
}
