use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    SquaredExponential,
    Matern52,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Matern52 => "matern52",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "se" | "squared-exponential" | "rbf" => Some(KernelFamily::SquaredExponential),
            "matern52" | "matern-5/2" => Some(KernelFamily::Matern52),
            _ => None,
        }
    }
}

/// Stationary ARD covariance function with `K(x, x) = output_scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<T> {
    family: KernelFamily,
    lengthscales: Vec<T>,
    output_scale: T,
}

impl<T: Real> Kernel<T> {
    pub fn new(family: KernelFamily, lengthscales: Vec<T>, output_scale: T) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidKernel("no lengthscales".into()));
        }
        if lengthscales.iter().any(|&l| !(l > T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidKernel("lengthscales must be positive".into()));
        }
        if !(output_scale > T::zero()) || !output_scale.is_finite() {
            return Err(Error::InvalidKernel("output scale must be positive".into()));
        }
        Ok(Self {
            family,
            lengthscales,
            output_scale,
        })
    }

    /// Unit output scale, all lengthscales equal.
    pub fn isotropic(family: KernelFamily, dim: usize, lengthscale: T) -> Result<Self> {
        Self::new(family, vec![lengthscale; dim], T::one())
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscales(&self) -> &[T] {
        &self.lengthscales
    }

    pub fn output_scale(&self) -> T {
        self.output_scale
    }

    /// Number of log-hyperparameters: one per lengthscale plus the output scale.
    pub fn n_hyper(&self) -> usize {
        self.dim() + 1
    }

    /// `[log l_1, .., log l_d, log s]`
    pub fn log_hyper(&self) -> Vec<T> {
        self.lengthscales
            .iter()
            .map(|l| l.ln())
            .chain(std::iter::once(self.output_scale.ln()))
            .collect()
    }

    pub fn with_log_hyper(&self, theta: &[T]) -> Result<Self> {
        let d = self.dim();
        if theta.len() != d + 1 {
            return Err(Error::DimensionMismatch {
                expected: d + 1,
                got: theta.len(),
            });
        }
        Self::new(
            self.family,
            theta[..d].iter().map(|t| t.exp()).collect(),
            theta[d].exp(),
        )
    }

    #[inline]
    fn scaled_sq_dist(&self, a: &[T], b: &[T]) -> T {
        debug_assert_eq!(a.len(), self.dim());
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((&x, &y), &l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum()
    }

    pub fn eval(&self, a: &[T], b: &[T]) -> T {
        let r2 = self.scaled_sq_dist(a, b);
        match self.family {
            KernelFamily::SquaredExponential => self.output_scale * (-T::lit(0.5) * r2).exp(),
            KernelFamily::Matern52 => {
                let s5r = (T::lit(5.0) * r2).sqrt();
                self.output_scale
                    * (T::one() + s5r + T::lit(5.0 / 3.0) * r2)
                    * (-s5r).exp()
            }
        }
    }

    /// Radial factor `q(r)` with `dk/dx_i = -q * (a_i - b_i) / l_i^2`.
    #[inline]
    fn radial_factor(&self, r2: T) -> T {
        match self.family {
            KernelFamily::SquaredExponential => self.output_scale * (-T::lit(0.5) * r2).exp(),
            KernelFamily::Matern52 => {
                let s5r = (T::lit(5.0) * r2).sqrt();
                T::lit(5.0 / 3.0) * self.output_scale * (T::one() + s5r) * (-s5r).exp()
            }
        }
    }

    /// Gradient with respect to the first argument.
    pub fn grad_first(&self, a: &[T], b: &[T], out: &mut [T]) {
        let q = self.radial_factor(self.scaled_sq_dist(a, b));
        for (((o, &x), &y), &l) in out.iter_mut().zip(a).zip(b).zip(&self.lengthscales) {
            *o = -q * (x - y) / (l * l);
        }
    }

    /// Value and gradient with respect to `[log l_1, .., log l_d, log s]`.
    pub fn hyper_grad(&self, a: &[T], b: &[T], out: &mut [T]) -> T {
        let r2 = self.scaled_sq_dist(a, b);
        let q = self.radial_factor(r2);
        let d = self.dim();
        for i in 0..d {
            let t = (a[i] - b[i]) / self.lengthscales[i];
            out[i] = q * t * t;
        }
        let k = self.eval(a, b);
        out[d] = k;
        k
    }

    pub fn gram(&self, xs: &[Vec<T>]) -> Matrix<T> {
        let n = xs.len();
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = self.output_scale;
            for j in 0..i {
                let v = self.eval(&xs[i], &xs[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    pub fn cross(&self, xs: &[Vec<T>], x: &[T]) -> Vec<T> {
        xs.iter().map(|xi| self.eval(x, xi)).collect()
    }
}
