use crate::error::{Error, Result};
use crate::gp::{Kernel, MeanFunction};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

/// Prior over a vector-valued function `h: X -> R^k`.
///
/// Output indices are zero-based. For [`MultiOutputModel::LatentFactor`]
/// the last output is the target fidelity.
#[derive(Clone, Debug, PartialEq)]
pub enum MultiOutputModel<T> {
    /// `k` unrelated single-output GPs.
    Independent {
        kernels: Vec<Kernel<T>>,
        means: Vec<MeanFunction<T>>,
    },
    /// Intrinsic coregionalization: `Cov(h_j(x), h_l(x')) = Sigma_{jl} K'(x, x')`.
    /// The shared kernel's output scale is ignored (taken as one).
    Coregionalized {
        coregion: Matrix<T>,
        kernel: Kernel<T>,
        means: Vec<MeanFunction<T>>,
    },
    /// Target `h_k` plus independent bias processes `h_j - h_k`, `j < k`:
    /// `Cov(h_j(x), h_l(x')) = 1{j = l, j != k} Xi_j(x, x') + K_k(x, x')`.
    LatentFactor {
        target_kernel: Kernel<T>,
        target_mean: MeanFunction<T>,
        bias_kernels: Vec<Kernel<T>>,
        bias_means: Vec<MeanFunction<T>>,
    },
    /// One GP on `X x W` with a product kernel over `d + 1` inputs; output
    /// `j` is the slice at `W = locations[j]`.
    Augmented {
        kernel: Kernel<T>,
        locations: Vec<T>,
        mean: MeanFunction<T>,
    },
}

/// Role of a log-hyperparameter, used to pick fitting bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HyperKind {
    /// Log lengthscale along input dimension `i` (`i == d` is the tag axis
    /// of the augmented model).
    LogLengthscale(usize),
    LogScale,
    /// Log of a diagonal entry of the coregionalization factor.
    LogFactorDiagonal,
    FactorOffDiagonal,
}

impl<T: Real> MultiOutputModel<T> {
    pub fn independent(kernels: Vec<Kernel<T>>, means: Vec<MeanFunction<T>>) -> Result<Self> {
        let m = MultiOutputModel::Independent { kernels, means };
        m.validate()?;
        Ok(m)
    }

    pub fn coregionalized(
        coregion: Matrix<T>,
        kernel: Kernel<T>,
        means: Vec<MeanFunction<T>>,
    ) -> Result<Self> {
        let m = MultiOutputModel::Coregionalized {
            coregion,
            kernel,
            means,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn latent_factor(
        target_kernel: Kernel<T>,
        target_mean: MeanFunction<T>,
        bias_kernels: Vec<Kernel<T>>,
        bias_means: Vec<MeanFunction<T>>,
    ) -> Result<Self> {
        let m = MultiOutputModel::LatentFactor {
            target_kernel,
            target_mean,
            bias_kernels,
            bias_means,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn augmented(kernel: Kernel<T>, locations: Vec<T>, mean: MeanFunction<T>) -> Result<Self> {
        let m = MultiOutputModel::Augmented {
            kernel,
            locations,
            mean,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        match self {
            MultiOutputModel::Independent { kernels, means } => {
                if kernels.is_empty() || kernels.len() != means.len() {
                    return bad("independent model needs one kernel and mean per output");
                }
                if kernels.iter().any(|k| k.dim() != kernels[0].dim()) {
                    return bad("kernels disagree on input dimension");
                }
            }
            MultiOutputModel::Coregionalized {
                coregion, means, ..
            } => {
                let k = means.len();
                if k == 0 || coregion.rows() != k || coregion.cols() != k {
                    return bad("coregionalization matrix must be k x k");
                }
                for i in 0..k {
                    for j in 0..i {
                        let (a, b) = (coregion[(i, j)], coregion[(j, i)]);
                        if (a - b).abs() > T::lit(1e-12) * (T::one() + a.abs()) {
                            return bad("coregionalization matrix must be symmetric");
                        }
                    }
                }
                Cholesky::semidefinite(coregion)
                    .map_err(|_| Error::InvalidArgument("coregionalization matrix must be PSD".into()))?;
            }
            MultiOutputModel::LatentFactor {
                target_kernel,
                bias_kernels,
                bias_means,
                ..
            } => {
                if bias_kernels.len() != bias_means.len() {
                    return bad("latent factor model needs one bias mean per bias kernel");
                }
                if bias_kernels.iter().any(|k| k.dim() != target_kernel.dim()) {
                    return bad("kernels disagree on input dimension");
                }
            }
            MultiOutputModel::Augmented {
                kernel, locations, ..
            } => {
                if locations.is_empty() {
                    return bad("augmented model needs at least one tag location");
                }
                if kernel.dim() < 2 {
                    return bad("augmented kernel must cover the inputs and the tag axis");
                }
            }
        }
        Ok(())
    }

    pub fn outputs(&self) -> usize {
        match self {
            MultiOutputModel::Independent { kernels, .. } => kernels.len(),
            MultiOutputModel::Coregionalized { means, .. } => means.len(),
            MultiOutputModel::LatentFactor { bias_kernels, .. } => bias_kernels.len() + 1,
            MultiOutputModel::Augmented { locations, .. } => locations.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            MultiOutputModel::Independent { kernels, .. } => kernels[0].dim(),
            MultiOutputModel::Coregionalized { kernel, .. } => kernel.dim(),
            MultiOutputModel::LatentFactor { target_kernel, .. } => target_kernel.dim(),
            MultiOutputModel::Augmented { kernel, .. } => kernel.dim() - 1,
        }
    }

    pub fn prior_mean(&self, x: &[T], j: usize) -> T {
        match self {
            MultiOutputModel::Independent { means, .. }
            | MultiOutputModel::Coregionalized { means, .. } => means[j].eval(x),
            MultiOutputModel::LatentFactor {
                target_mean,
                bias_means,
                ..
            } => {
                let base = target_mean.eval(x);
                if j < bias_means.len() {
                    base + bias_means[j].eval(x)
                } else {
                    base
                }
            }
            MultiOutputModel::Augmented { mean, .. } => mean.eval(x),
        }
    }

    pub fn prior_cov(&self, x: &[T], j: usize, x2: &[T], j2: usize) -> T {
        match self {
            MultiOutputModel::Independent { kernels, .. } => {
                if j == j2 {
                    kernels[j].eval(x, x2)
                } else {
                    T::zero()
                }
            }
            MultiOutputModel::Coregionalized {
                coregion, kernel, ..
            } => coregion[(j, j2)] * kernel.eval(x, x2) / kernel.output_scale(),
            MultiOutputModel::LatentFactor {
                target_kernel,
                bias_kernels,
                ..
            } => {
                let mut v = target_kernel.eval(x, x2);
                if j == j2 && j < bias_kernels.len() {
                    v += bias_kernels[j].eval(x, x2);
                }
                v
            }
            MultiOutputModel::Augmented {
                kernel, locations, ..
            } => kernel.eval(&augment(x, locations[j]), &augment(x2, locations[j2])),
        }
    }

    /// Gradient of [`Self::prior_cov`] with respect to `x`.
    pub fn prior_cov_grad(&self, x: &[T], j: usize, x2: &[T], j2: usize, out: &mut [T]) {
        match self {
            MultiOutputModel::Independent { kernels, .. } => {
                if j == j2 {
                    kernels[j].grad_first(x, x2, out);
                } else {
                    out.iter_mut().for_each(|v| *v = T::zero());
                }
            }
            MultiOutputModel::Coregionalized {
                coregion, kernel, ..
            } => {
                kernel.grad_first(x, x2, out);
                let s = coregion[(j, j2)] / kernel.output_scale();
                out.iter_mut().for_each(|v| *v *= s);
            }
            MultiOutputModel::LatentFactor {
                target_kernel,
                bias_kernels,
                ..
            } => {
                target_kernel.grad_first(x, x2, out);
                if j == j2 && j < bias_kernels.len() {
                    let mut extra = vec![T::zero(); out.len()];
                    bias_kernels[j].grad_first(x, x2, &mut extra);
                    for (o, e) in out.iter_mut().zip(extra) {
                        *o += e;
                    }
                }
            }
            MultiOutputModel::Augmented {
                kernel, locations, ..
            } => {
                let mut full = vec![T::zero(); x.len() + 1];
                kernel.grad_first(&augment(x, locations[j]), &augment(x2, locations[j2]), &mut full);
                out.copy_from_slice(&full[..x.len()]);
            }
        }
    }

    /// Prior `k x k` covariance of `h(x)` and `h(x2)`.
    pub fn prior_cov_matrix(&self, x: &[T], x2: &[T]) -> Matrix<T> {
        let k = self.outputs();
        Matrix::from_fn(k, k, |a, b| self.prior_cov(x, a, x2, b))
    }

    /// Largest prior variance across outputs, used to scale jitter.
    pub fn variance_scale(&self) -> T {
        let k = self.outputs();
        let zero = vec![T::zero(); self.input_dim()];
        (0..k)
            .map(|j| self.prior_cov(&zero, j, &zero, j))
            .fold(T::zero(), |m, v| m.max(v))
    }

    // ----- hyperparameters -----

    pub fn hyper_kinds(&self) -> Vec<HyperKind> {
        let kernel_kinds = |d: usize| {
            (0..d)
                .map(HyperKind::LogLengthscale)
                .chain(std::iter::once(HyperKind::LogScale))
                .collect::<Vec<_>>()
        };
        match self {
            MultiOutputModel::Independent { kernels, .. } => {
                kernels.iter().flat_map(|k| kernel_kinds(k.dim())).collect()
            }
            MultiOutputModel::Coregionalized {
                kernel, means, ..
            } => {
                let mut v: Vec<HyperKind> = (0..kernel.dim()).map(HyperKind::LogLengthscale).collect();
                let k = means.len();
                for a in 0..k {
                    for b in 0..=a {
                        v.push(if a == b {
                            HyperKind::LogFactorDiagonal
                        } else {
                            HyperKind::FactorOffDiagonal
                        });
                    }
                }
                v
            }
            MultiOutputModel::LatentFactor {
                target_kernel,
                bias_kernels,
                ..
            } => std::iter::once(target_kernel)
                .chain(bias_kernels)
                .flat_map(|k| kernel_kinds(k.dim()))
                .collect(),
            MultiOutputModel::Augmented { kernel, .. } => kernel_kinds(kernel.dim()),
        }
    }

    pub fn n_hyper(&self) -> usize {
        self.hyper_kinds().len()
    }

    pub fn log_hyper(&self) -> Vec<T> {
        match self {
            MultiOutputModel::Independent { kernels, .. } => {
                kernels.iter().flat_map(|k| k.log_hyper()).collect()
            }
            MultiOutputModel::Coregionalized {
                coregion, kernel, ..
            } => {
                let mut v: Vec<T> = kernel.lengthscales().iter().map(|l| l.ln()).collect();
                let chol = Cholesky::semidefinite(coregion).expect("validated PSD").into_factor();
                let k = coregion.rows();
                for a in 0..k {
                    for b in 0..=a {
                        let l = chol[(a, b)];
                        v.push(if a == b { l.max(T::lit(1e-12)).ln() } else { l });
                    }
                }
                v
            }
            MultiOutputModel::LatentFactor {
                target_kernel,
                bias_kernels,
                ..
            } => std::iter::once(target_kernel)
                .chain(bias_kernels)
                .flat_map(|k| k.log_hyper())
                .collect(),
            MultiOutputModel::Augmented { kernel, .. } => kernel.log_hyper(),
        }
    }

    pub fn with_log_hyper(&self, theta: &[T]) -> Result<Self> {
        if theta.len() != self.n_hyper() {
            return Err(Error::DimensionMismatch {
                expected: self.n_hyper(),
                got: theta.len(),
            });
        }
        Ok(match self {
            MultiOutputModel::Independent { kernels, means } => {
                let mut off = 0;
                let mut ks = Vec::with_capacity(kernels.len());
                for k in kernels {
                    let n = k.n_hyper();
                    ks.push(k.with_log_hyper(&theta[off..off + n])?);
                    off += n;
                }
                MultiOutputModel::Independent {
                    kernels: ks,
                    means: means.clone(),
                }
            }
            MultiOutputModel::Coregionalized { kernel, means, .. } => {
                let d = kernel.dim();
                let kern = Kernel::new(
                    kernel.family(),
                    theta[..d].iter().map(|t| t.exp()).collect(),
                    T::one(),
                )?;
                let k = means.len();
                let l = coregion_factor(&theta[d..], k);
                MultiOutputModel::Coregionalized {
                    coregion: l.matmul(&l.transpose()),
                    kernel: kern,
                    means: means.clone(),
                }
            }
            MultiOutputModel::LatentFactor {
                target_kernel,
                target_mean,
                bias_kernels,
                bias_means,
            } => {
                let n = target_kernel.n_hyper();
                let tk = target_kernel.with_log_hyper(&theta[..n])?;
                let mut off = n;
                let mut bks = Vec::with_capacity(bias_kernels.len());
                for k in bias_kernels {
                    let m = k.n_hyper();
                    bks.push(k.with_log_hyper(&theta[off..off + m])?);
                    off += m;
                }
                MultiOutputModel::LatentFactor {
                    target_kernel: tk,
                    target_mean: *target_mean,
                    bias_kernels: bks,
                    bias_means: bias_means.clone(),
                }
            }
            MultiOutputModel::Augmented {
                kernel,
                locations,
                mean,
            } => MultiOutputModel::Augmented {
                kernel: kernel.with_log_hyper(theta)?,
                locations: locations.clone(),
                mean: *mean,
            },
        })
    }

    /// Value of [`Self::prior_cov`] and its gradient with respect to
    /// [`Self::log_hyper`].
    pub fn prior_cov_hyper_grad(&self, x: &[T], j: usize, x2: &[T], j2: usize, out: &mut [T]) -> T {
        out.iter_mut().for_each(|v| *v = T::zero());
        match self {
            MultiOutputModel::Independent { kernels, .. } => {
                let mut off = 0;
                for (idx, k) in kernels.iter().enumerate() {
                    let n = k.n_hyper();
                    if idx == j && j == j2 {
                        return k.hyper_grad(x, x2, &mut out[off..off + n]);
                    }
                    off += n;
                }
                T::zero()
            }
            MultiOutputModel::Coregionalized {
                coregion, kernel, ..
            } => {
                let d = kernel.dim();
                let mut kg = vec![T::zero(); d + 1];
                let kv = kernel.hyper_grad(x, x2, &mut kg) / kernel.output_scale();
                let s = coregion[(j, j2)];
                for i in 0..d {
                    out[i] = s * kg[i] / kernel.output_scale();
                }
                // dSigma_{j j2} / dL_{ab} = 1{j=a} L_{j2 b} + 1{j2=a} L_{j b}
                let k = coregion.rows();
                let l = Cholesky::semidefinite(coregion).expect("validated PSD").into_factor();
                let mut idx = d;
                for a in 0..k {
                    for b in 0..=a {
                        let mut g = T::zero();
                        if j == a {
                            g += l[(j2, b)];
                        }
                        if j2 == a {
                            g += l[(j, b)];
                        }
                        if a == b {
                            g *= l[(a, a)];
                        }
                        out[idx] = g * kv;
                        idx += 1;
                    }
                }
                s * kv
            }
            MultiOutputModel::LatentFactor {
                target_kernel,
                bias_kernels,
                ..
            } => {
                let n = target_kernel.n_hyper();
                let mut v = target_kernel.hyper_grad(x, x2, &mut out[..n]);
                if j == j2 && j < bias_kernels.len() {
                    let m = bias_kernels[j].n_hyper();
                    let off = n + j * m;
                    v += bias_kernels[j].hyper_grad(x, x2, &mut out[off..off + m]);
                }
                v
            }
            MultiOutputModel::Augmented {
                kernel, locations, ..
            } => kernel.hyper_grad(&augment(x, locations[j]), &augment(x2, locations[j2]), out),
        }
    }

    // ----- constant means -----

    /// Number of constant-mean coefficients.
    pub fn n_mean_coefficients(&self) -> usize {
        match self {
            MultiOutputModel::Augmented { .. } => 1,
            _ => self.outputs(),
        }
    }

    /// Design row of output `j` in the constant-mean coefficients.
    pub fn mean_basis(&self, j: usize) -> Vec<T> {
        let q = self.n_mean_coefficients();
        let mut h = vec![T::zero(); q];
        match self {
            MultiOutputModel::Augmented { .. } => h[0] = T::one(),
            MultiOutputModel::LatentFactor { .. } => {
                h[q - 1] = T::one();
                if j < q - 1 {
                    h[j] = T::one();
                }
            }
            _ => h[j] = T::one(),
        }
        h
    }

    pub fn with_mean_coefficients(&self, beta: &[T]) -> Self {
        let mut m = self.clone();
        match &mut m {
            MultiOutputModel::Independent { means, .. }
            | MultiOutputModel::Coregionalized { means, .. } => {
                for (mj, &b) in means.iter_mut().zip(beta) {
                    *mj = MeanFunction::Constant(b);
                }
            }
            MultiOutputModel::LatentFactor {
                target_mean,
                bias_means,
                ..
            } => {
                let q = beta.len();
                *target_mean = MeanFunction::Constant(beta[q - 1]);
                for (mj, &b) in bias_means.iter_mut().zip(beta) {
                    *mj = MeanFunction::Constant(b);
                }
            }
            MultiOutputModel::Augmented { mean, .. } => *mean = MeanFunction::Constant(beta[0]),
        }
        m
    }

    /// Adds `c` to every output's prior mean.
    pub fn with_mean_shift(&self, c: T) -> Self {
        let mut m = self.clone();
        match &mut m {
            MultiOutputModel::Independent { means, .. }
            | MultiOutputModel::Coregionalized { means, .. } => {
                for mj in means.iter_mut() {
                    *mj = mj.shifted(c);
                }
            }
            MultiOutputModel::LatentFactor { target_mean, .. } => *target_mean = target_mean.shifted(c),
            MultiOutputModel::Augmented { mean, .. } => *mean = mean.shifted(c),
        }
        m
    }
}

fn augment<T: Real>(x: &[T], w: T) -> Vec<T> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.extend_from_slice(x);
    v.push(w);
    v
}

/// Lower-triangular factor from packed row-major entries with log diagonal.
fn coregion_factor<T: Real>(packed: &[T], k: usize) -> Matrix<T> {
    let mut l = Matrix::zeros(k, k);
    let mut idx = 0;
    for a in 0..k {
        for b in 0..=a {
            l[(a, b)] = if a == b { packed[idx].exp() } else { packed[idx] };
            idx += 1;
        }
    }
    l
}
