use crate::error::Result;
use crate::gp::{Dataset, Kernel, MeanFunction};
use crate::linalg::{dot, Cholesky, JitterPolicy, Matrix};
use crate::scalar::Real;

/// Exact GP posterior conditioned on a [`Dataset`].
///
/// Holds the Cholesky factor of `K_0(X, X) + noise I + jitter I` and the
/// solved residual vector, so predictions are two triangular solves.
/// Immutable once built.
#[derive(Clone, Debug)]
pub struct GpPosterior<T> {
    kernel: Kernel<T>,
    mean: MeanFunction<T>,
    data: Dataset<T>,
    chol: Option<Cholesky<T>>,
    alpha: Vec<T>,
}

impl<T: Real> GpPosterior<T> {
    pub fn new(kernel: Kernel<T>, mean: MeanFunction<T>, data: Dataset<T>) -> Result<Self> {
        Self::with_jitter_policy(kernel, mean, data, JitterPolicy::default())
    }

    pub fn with_jitter_policy(
        kernel: Kernel<T>,
        mean: MeanFunction<T>,
        data: Dataset<T>,
        policy: JitterPolicy,
    ) -> Result<Self> {
        if let Some(d) = data.dim() {
            if d != kernel.dim() {
                return Err(crate::Error::DimensionMismatch {
                    expected: kernel.dim(),
                    got: d,
                });
            }
        }
        if data.is_empty() {
            return Ok(Self {
                kernel,
                mean,
                data,
                chol: None,
                alpha: Vec::new(),
            });
        }
        let mut gram = kernel.gram(data.xs());
        gram.add_to_diagonal(data.noise_variance());
        let chol = Cholesky::with_jitter(&gram, kernel.output_scale(), policy)?;
        let resid: Vec<T> = data
            .xs()
            .iter()
            .zip(data.ys())
            .map(|(x, &y)| y - mean.eval(x))
            .collect();
        let alpha = chol.solve(&resid);
        Ok(Self {
            kernel,
            mean,
            data,
            chol: Some(chol),
            alpha,
        })
    }

    /// The unconditioned prior.
    pub fn prior(kernel: Kernel<T>, mean: MeanFunction<T>) -> Self {
        Self {
            kernel,
            mean,
            data: Dataset::new(T::zero()).expect("zero noise is valid"),
            chol: None,
            alpha: Vec::new(),
        }
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    pub fn mean_function(&self) -> &MeanFunction<T> {
        &self.mean
    }

    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn noise_variance(&self) -> T {
        self.data.noise_variance()
    }

    /// Diagonal jitter actually added during factorization.
    pub fn jitter(&self) -> T {
        self.chol.as_ref().map_or(T::zero(), Cholesky::jitter)
    }

    /// Solved residuals `[K + noise I]^{-1} (y - mu_0(X))`.
    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn cholesky(&self) -> Option<&Cholesky<T>> {
        self.chol.as_ref()
    }

    /// `k(X, x)` against the conditioning points.
    pub fn cross(&self, x: &[T]) -> Vec<T> {
        self.kernel.cross(self.data.xs(), x)
    }

    /// Row `i` holds the gradient of `k(x, x_i)` with respect to `x`.
    pub fn cross_jacobian(&self, x: &[T]) -> Matrix<T> {
        let d = self.dim();
        let mut j = Matrix::zeros(self.data.len(), d);
        for (i, xi) in self.data.xs().iter().enumerate() {
            self.kernel.grad_first(x, xi, j.row_mut(i));
        }
        j
    }

    /// `[K + noise I]^{-1} v`
    pub fn solve(&self, v: &[T]) -> Vec<T> {
        match &self.chol {
            Some(c) => c.solve(v),
            None => Vec::new(),
        }
    }

    /// `L^{-1} v`
    pub fn whiten(&self, v: &[T]) -> Vec<T> {
        match &self.chol {
            Some(c) => c.solve_lower(v),
            None => Vec::new(),
        }
    }

    /// Posterior mean. At a noiseless evaluated point this is the observed
    /// value itself rather than the jittered interpolant.
    pub fn mean(&self, x: &[T]) -> T {
        if self.data.is_empty() {
            return self.mean.eval(x);
        }
        if let Some(y) = self.observed(x) {
            return y;
        }
        self.mean.eval(x) + dot(&self.cross(x), &self.alpha)
    }

    /// The recorded value at `x` when the data are noiseless and `x` was evaluated.
    pub fn observed(&self, x: &[T]) -> Option<T> {
        if self.data.noise_variance() > T::zero() {
            return None;
        }
        self.data
            .xs()
            .iter()
            .position(|xi| xi.as_slice() == x)
            .map(|i| self.data.ys()[i])
    }

    /// Posterior covariance `K_n(x, x2)`. The diagonal case is clamped at zero.
    pub fn cov(&self, x: &[T], x2: &[T]) -> T {
        if x == x2 {
            return self.variance(x);
        }
        let prior = self.kernel.eval(x, x2);
        if self.data.is_empty() {
            return prior;
        }
        let w1 = self.whiten(&self.cross(x));
        let w2 = self.whiten(&self.cross(x2));
        prior - dot(&w1, &w2)
    }

    /// Posterior variance before clamping; may be slightly negative.
    pub fn raw_variance(&self, x: &[T]) -> T {
        let prior = self.kernel.output_scale();
        if self.data.is_empty() {
            return prior;
        }
        let w = self.whiten(&self.cross(x));
        prior - dot(&w, &w)
    }

    /// Posterior variance; values at or below the jitter are reported as zero.
    pub fn variance(&self, x: &[T]) -> T {
        if self.observed(x).is_some() {
            return T::zero();
        }
        self.resolve(self.raw_variance(x))
    }

    fn resolve(&self, v: T) -> T {
        if v <= self.jitter() {
            T::zero()
        } else {
            v
        }
    }

    pub fn mean_variance(&self, x: &[T]) -> (T, T) {
        if self.data.is_empty() {
            return (self.mean.eval(x), self.kernel.output_scale());
        }
        if let Some(y) = self.observed(x) {
            return (y, T::zero());
        }
        let k = self.cross(x);
        let m = self.mean.eval(x) + dot(&k, &self.alpha);
        let w = self.whiten(&k);
        (m, self.resolve(self.kernel.output_scale() - dot(&w, &w)))
    }

    /// Mean, raw variance and their input gradients.
    pub fn mean_variance_grad(&self, x: &[T]) -> (T, T, Vec<T>, Vec<T>) {
        let d = self.dim();
        if self.data.is_empty() {
            return (
                self.mean.eval(x),
                self.kernel.output_scale(),
                vec![T::zero(); d],
                vec![T::zero(); d],
            );
        }
        let k = self.cross(x);
        let jac = self.cross_jacobian(x);
        let m = self
            .observed(x)
            .unwrap_or_else(|| self.mean.eval(x) + dot(&k, &self.alpha));
        let mgrad = jac.tr_matvec(&self.alpha);
        let s = self.solve(&k);
        let v = self.kernel.output_scale() - dot(&k, &s);
        let two = T::lit(2.0);
        let vgrad = jac.tr_matvec(&s).into_iter().map(|g| -two * g).collect();
        (m, v, mgrad, vgrad)
    }

    /// Joint posterior covariance over `xs`.
    pub fn cov_matrix(&self, xs: &[Vec<T>]) -> Matrix<T> {
        let m = xs.len();
        let ws: Vec<Vec<T>> = xs.iter().map(|x| self.whiten(&self.cross(x))).collect();
        let mut c = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let mut v = self.kernel.eval(&xs[i], &xs[j]);
                if !self.data.is_empty() {
                    v -= dot(&ws[i], &ws[j]);
                }
                if i == j {
                    v = v.max(T::zero());
                }
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        c
    }

    /// Conditions on one more record, refactoring from scratch.
    pub fn condition_on(&self, x: Vec<T>, y: T) -> Result<Self> {
        let mut data = self.data.clone();
        data.push(x, y)?;
        Self::new(self.kernel.clone(), self.mean, data)
    }
}
