//! Knowledge gradient for composite objectives: the value of observing all
//! of `h(x)` for the maximum over a point set of `E_n[g(h(x'))]`.

use crate::acquisition::OuterFunction;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, JitterPolicy, Matrix};
use crate::multioutput::MoGpPosterior;

#[derive(Clone, Debug)]
struct Cached {
    x: Vec<f64>,
    mean: Vec<f64>,
    cov: Matrix<f64>,
    white: Vec<Vec<f64>>,
}

/// Monte-Carlo composite KG over a fixed point set plus the candidate.
/// Requires an outer function with a closed-form posterior expectation.
#[derive(Clone, Debug)]
pub struct CompositeKg<'a> {
    post: &'a MoGpPosterior<f64>,
    outer: OuterFunction,
    points: Vec<Cached>,
    draws: Matrix<f64>,
    baseline: f64,
}

impl<'a> CompositeKg<'a> {
    pub fn new(
        post: &'a MoGpPosterior<f64>,
        outer: OuterFunction,
        points: &[Vec<f64>],
        draws: Matrix<f64>,
    ) -> Result<Self> {
        let k = post.outputs();
        if draws.cols() != k || draws.rows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: draws.cols(),
            });
        }
        let mut kg = Self {
            post,
            outer,
            points: Vec::new(),
            draws,
            baseline: f64::NEG_INFINITY,
        };
        kg.points = points.iter().map(|x| kg.cache(x)).collect();
        for p in &kg.points {
            let g = kg
                .outer
                .expected(&p.mean, &p.cov)
                .ok_or_else(|| Error::InvalidArgument("outer function has no closed-form expectation".into()))?;
            kg.baseline = kg.baseline.max(g);
        }
        Ok(kg)
    }

    fn cache(&self, x: &[f64]) -> Cached {
        let k = self.post.outputs();
        let (mean, cov) = self.post.mean_cov(x);
        let white = (0..k).map(|j| self.post.whiten(&self.post.cross(x, j))).collect();
        Cached {
            x: x.to_vec(),
            mean,
            cov,
            white,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let k = self.post.outputs();
        let cand = self.cache(x);
        let mut s = cand.cov.clone();
        for j in 0..k {
            s[(j, j)] += self.post.data().noise()[j];
        }
        let scale = self.post.model().variance_scale();
        if s.max_diagonal() <= 1e-12 * scale {
            return 0.0;
        }
        let Ok(ls) = Cholesky::with_jitter(&s, scale, JitterPolicy::default()) else {
            return 0.0;
        };
        // Mean update directions A = Sigma(x', x) L_S^{-T} and updated covariances.
        let update = |p: &Cached| -> (Matrix<f64>, Matrix<f64>) {
            let mut a = Matrix::zeros(k, k);
            for r in 0..k {
                let row: Vec<f64> = (0..k)
                    .map(|c| {
                        let prior = self.post.model().prior_cov(&p.x, r, x, c);
                        if self.post.is_empty() {
                            prior
                        } else {
                            prior - dot(&p.white[r], &cand.white[c])
                        }
                    })
                    .collect();
                a.row_mut(r).copy_from_slice(&ls.solve_lower(&row));
            }
            let cov = Matrix::from_fn(k, k, |r, c| p.cov[(r, c)] - dot(a.row(r), a.row(c)));
            (a, cov)
        };
        let mut lines: Vec<(&Cached, Matrix<f64>, Matrix<f64>)> = self
            .points
            .iter()
            .map(|p| {
                let (a, c) = update(p);
                (p, a, c)
            })
            .collect();
        let (ca, cc) = update(&cand);
        lines.push((&cand, ca, cc));
        let baseline = self
            .baseline
            .max(self.outer.expected(&cand.mean, &cand.cov).unwrap_or(f64::NEG_INFINITY));
        let m = self.draws.rows();
        let mut total = 0.0;
        let mut y = vec![0.0; k];
        for s in 0..m {
            let z = self.draws.row(s);
            let mut best = f64::NEG_INFINITY;
            for (p, a, c) in &lines {
                let az = a.matvec(z);
                for j in 0..k {
                    y[j] = p.mean[j] + az[j];
                }
                let g = self.outer.expected(&y, c).unwrap_or(f64::NEG_INFINITY);
                if g > best {
                    best = g;
                }
            }
            total += best;
        }
        (total / m as f64 - baseline).max(0.0)
    }
}
