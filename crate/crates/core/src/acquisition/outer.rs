use std::fmt;
use std::sync::Arc;

use crate::linalg::Matrix;

type Eval = dyn Fn(&[f64]) -> f64 + Send + Sync;
type Grad = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// Known outer function `g: R^k -> R` of a composite objective `g(h(x))`,
/// to be maximized.
#[derive(Clone)]
pub enum OuterFunction {
    /// `g(y) = y_0`; only for `k = 1`.
    Identity,
    /// `g(y) = -||y - target||^2`.
    NegSumSquares(Vec<f64>),
    /// `g(y) = sum_j y_j`.
    Sum,
    User {
        name: String,
        eval: Arc<Eval>,
        grad: Arc<Grad>,
    },
}

impl fmt::Debug for OuterFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OuterFunction::Identity => f.write_str("Identity"),
            OuterFunction::NegSumSquares(t) => f.debug_tuple("NegSumSquares").field(t).finish(),
            OuterFunction::Sum => f.write_str("Sum"),
            OuterFunction::User { name, .. } => f.debug_struct("User").field("name", name).finish(),
        }
    }
}

impl OuterFunction {
    pub fn user(
        name: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        OuterFunction::User {
            name: name.into(),
            eval: Arc::new(eval),
            grad: Arc::new(grad),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            OuterFunction::Identity => "identity",
            OuterFunction::NegSumSquares(_) => "neg-sum-squares",
            OuterFunction::Sum => "sum",
            OuterFunction::User { name, .. } => name,
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            OuterFunction::Identity => y[0],
            OuterFunction::NegSumSquares(t) => -y.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            OuterFunction::Sum => y.iter().sum(),
            OuterFunction::User { eval, .. } => eval(y),
        }
    }

    pub fn grad(&self, y: &[f64], out: &mut [f64]) {
        match self {
            OuterFunction::Identity => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[0] = 1.0;
            }
            OuterFunction::NegSumSquares(t) => {
                for ((o, a), b) in out.iter_mut().zip(y).zip(t) {
                    *o = -2.0 * (a - b);
                }
            }
            OuterFunction::Sum => out.iter_mut().for_each(|v| *v = 1.0),
            OuterFunction::User { grad, .. } => grad(y, out),
        }
    }

    /// `E[g(Y)]` for `Y ~ N(mean, cov)` when available in closed form.
    pub fn expected(&self, mean: &[f64], cov: &Matrix<f64>) -> Option<f64> {
        match self {
            OuterFunction::Identity => Some(mean[0]),
            OuterFunction::NegSumSquares(_) => {
                Some(self.eval(mean) - cov.diagonal().iter().sum::<f64>())
            }
            OuterFunction::Sum => Some(mean.iter().sum()),
            OuterFunction::User { .. } => None,
        }
    }
}
