use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::linalg::{dot, Cholesky, JitterPolicy, Matrix};
use crate::multioutput::{MultiOutputModel, TaggedDataset};
use crate::qmc;
use crate::scalar::Real;

/// Joint posterior of a [`MultiOutputModel`] conditioned on tagged rows.
///
/// The Gram matrix has one row per observed `(x_i, j_i)`, so partial
/// evaluations need no imputation.
#[derive(Clone, Debug)]
pub struct MoGpPosterior<T> {
    model: MultiOutputModel<T>,
    data: TaggedDataset<T>,
    chol: Option<Cholesky<T>>,
    alpha: Vec<T>,
    policy: JitterPolicy,
}

impl<T: Real> MoGpPosterior<T> {
    pub fn new(model: MultiOutputModel<T>, data: TaggedDataset<T>) -> Result<Self> {
        Self::with_jitter_policy(model, data, JitterPolicy::default())
    }

    pub fn with_jitter_policy(
        model: MultiOutputModel<T>,
        data: TaggedDataset<T>,
        policy: JitterPolicy,
    ) -> Result<Self> {
        if data.outputs() != model.outputs() {
            return Err(Error::DimensionMismatch {
                expected: model.outputs(),
                got: data.outputs(),
            });
        }
        if let Some(d) = data.dim() {
            if d != model.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.input_dim(),
                    got: d,
                });
            }
        }
        let mut post = Self {
            model,
            data,
            chol: None,
            alpha: Vec::new(),
            policy,
        };
        if !post.data.is_empty() {
            let rows = post.data.records();
            let n = rows.len();
            let mut gram = Matrix::from_fn(n, n, |a, b| {
                post.model
                    .prior_cov(&rows[a].x, rows[a].tag, &rows[b].x, rows[b].tag)
            });
            for (i, r) in rows.iter().enumerate() {
                gram[(i, i)] += post.data.noise()[r.tag];
            }
            let chol = Cholesky::with_jitter(&gram, post.model.variance_scale(), policy)?;
            post.chol = Some(chol);
            post.refresh_alpha();
        }
        Ok(post)
    }

    /// Unconditioned prior with noiseless outputs.
    pub fn prior(model: MultiOutputModel<T>) -> Self {
        let data = TaggedDataset::noiseless(model.outputs()).expect("model has outputs");
        Self {
            model,
            data,
            chol: None,
            alpha: Vec::new(),
            policy: JitterPolicy::default(),
        }
    }

    /// One-output view of a single-output posterior, reusing its factorization.
    pub fn from_single(gp: &GpPosterior<T>) -> Self {
        let model = MultiOutputModel::Independent {
            kernels: vec![gp.kernel().clone()],
            means: vec![*gp.mean_function()],
        };
        let mut data =
            TaggedDataset::new(vec![gp.noise_variance()]).expect("noise variance is valid");
        for (x, &y) in gp.data().xs().iter().zip(gp.data().ys()) {
            data.push(x.clone(), 0, y, T::zero())
                .expect("records of a valid dataset");
        }
        Self {
            model,
            data,
            chol: gp.cholesky().cloned(),
            alpha: gp.alpha().to_vec(),
            policy: JitterPolicy::default(),
        }
    }

    fn refresh_alpha(&mut self) {
        let resid: Vec<T> = self
            .data
            .records()
            .iter()
            .map(|r| r.y - self.model.prior_mean(&r.x, r.tag))
            .collect();
        self.alpha = self.solve(&resid);
    }

    pub fn model(&self) -> &MultiOutputModel<T> {
        &self.model
    }

    pub fn data(&self) -> &TaggedDataset<T> {
        &self.data
    }

    pub fn outputs(&self) -> usize {
        self.model.outputs()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn jitter(&self) -> T {
        self.chol.as_ref().map_or(T::zero(), Cholesky::jitter)
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Prior covariances between `h_j(x)` and every conditioning row.
    pub fn cross(&self, x: &[T], j: usize) -> Vec<T> {
        self.data
            .records()
            .iter()
            .map(|r| self.model.prior_cov(x, j, &r.x, r.tag))
            .collect()
    }

    /// Row `i` is the gradient in `x` of the `i`-th entry of [`Self::cross`].
    pub fn cross_jacobian(&self, x: &[T], j: usize) -> Matrix<T> {
        let mut m = Matrix::zeros(self.len(), x.len());
        for (i, r) in self.data.records().iter().enumerate() {
            self.model.prior_cov_grad(x, j, &r.x, r.tag, m.row_mut(i));
        }
        m
    }

    /// `sum_j p_j cross(x, j)`
    pub fn functional_cross(&self, x: &[T], p: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        for (j, &pj) in p.iter().enumerate() {
            if pj == T::zero() {
                continue;
            }
            for (o, r) in out.iter_mut().zip(self.data.records()) {
                *o += pj * self.model.prior_cov(x, j, &r.x, r.tag);
            }
        }
        out
    }

    pub fn functional_cross_jacobian(&self, x: &[T], p: &[T]) -> Matrix<T> {
        let d = x.len();
        let mut m = Matrix::zeros(self.len(), d);
        let mut g = vec![T::zero(); d];
        for (j, &pj) in p.iter().enumerate() {
            if pj == T::zero() {
                continue;
            }
            for (i, r) in self.data.records().iter().enumerate() {
                self.model.prior_cov_grad(x, j, &r.x, r.tag, &mut g);
                for (o, gv) in m.row_mut(i).iter_mut().zip(&g) {
                    *o += pj * *gv;
                }
            }
        }
        m
    }

    /// `[K + noise]^{-1} v`; empty when unconditioned.
    pub fn solve(&self, v: &[T]) -> Vec<T> {
        match &self.chol {
            Some(c) => c.solve(v),
            None => Vec::new(),
        }
    }

    pub fn whiten(&self, v: &[T]) -> Vec<T> {
        match &self.chol {
            Some(c) => c.solve_lower(v),
            None => Vec::new(),
        }
    }

    /// Posterior mean of output `j`; a noiseless record of `j` at `x` is
    /// returned as is.
    pub fn mean_at(&self, x: &[T], j: usize) -> T {
        let m0 = self.model.prior_mean(x, j);
        if self.is_empty() {
            return m0;
        }
        if let Some(y) = self.observed(x, j) {
            return y;
        }
        m0 + dot(&self.cross(x, j), &self.alpha)
    }

    /// The recorded value of output `j` at `x`, if it was observed without noise.
    pub fn observed(&self, x: &[T], j: usize) -> Option<T> {
        if self.data.noise().get(j).is_none_or(|&v| v > T::zero()) {
            return None;
        }
        self.data
            .records()
            .iter()
            .find(|r| r.tag == j && r.x.as_slice() == x)
            .map(|r| r.y)
    }

    /// `mu_n(x)` over all outputs.
    pub fn mean(&self, x: &[T]) -> Vec<T> {
        (0..self.outputs()).map(|j| self.mean_at(x, j)).collect()
    }

    /// Unclamped `Cov_n(h_j(x), h_j2(x2))`.
    pub fn cov_at(&self, x: &[T], j: usize, x2: &[T], j2: usize) -> T {
        let prior = self.model.prior_cov(x, j, x2, j2);
        if self.is_empty() {
            return prior;
        }
        let w1 = self.whiten(&self.cross(x, j));
        let w2 = self.whiten(&self.cross(x2, j2));
        prior - dot(&w1, &w2)
    }

    /// `K_n(x, x2)` as a `k x k` matrix.
    pub fn cross_cov(&self, x: &[T], x2: &[T]) -> Matrix<T> {
        let k = self.outputs();
        let w1: Vec<Vec<T>> = (0..k).map(|j| self.whiten(&self.cross(x, j))).collect();
        let w2: Vec<Vec<T>> = (0..k).map(|j| self.whiten(&self.cross(x2, j))).collect();
        Matrix::from_fn(k, k, |a, b| {
            let prior = self.model.prior_cov(x, a, x2, b);
            if self.is_empty() {
                prior
            } else {
                prior - dot(&w1[a], &w2[b])
            }
        })
    }

    /// `K_n(x, x)`, symmetrized. Outputs whose variance is at or below the
    /// jitter get zero rows and columns.
    pub fn cov(&self, x: &[T]) -> Matrix<T> {
        let k = self.outputs();
        let ws: Vec<Vec<T>> = (0..k).map(|j| self.whiten(&self.cross(x, j))).collect();
        let mut c = Matrix::zeros(k, k);
        for a in 0..k {
            for b in 0..=a {
                let mut v = self.model.prior_cov(x, a, x, b);
                if !self.is_empty() {
                    v -= dot(&ws[a], &ws[b]);
                }
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        self.zero_known_at(x, &mut c);
        c
    }

    /// As [`Self::zero_unresolved`] for the `k x k` covariance at `x`, also
    /// zeroing outputs observed there without noise.
    pub fn zero_known_at(&self, x: &[T], c: &mut Matrix<T>) -> Vec<usize> {
        for j in 0..c.rows() {
            if self.observed(x, j).is_some() {
                c[(j, j)] = T::zero();
            }
        }
        self.zero_unresolved(c)
    }

    /// Zeroes the rows and columns of `c` whose diagonal is at or below the
    /// jitter; returns their indices.
    pub fn zero_unresolved(&self, c: &mut Matrix<T>) -> Vec<usize> {
        let k = c.rows();
        let idx: Vec<usize> = (0..k).filter(|&j| c[(j, j)] <= self.jitter()).collect();
        for &j in &idx {
            for l in 0..k {
                c[(j, l)] = T::zero();
                c[(l, j)] = T::zero();
            }
        }
        idx
    }

    pub fn mean_cov(&self, x: &[T]) -> (Vec<T>, Matrix<T>) {
        (self.mean(x), self.cov(x))
    }

    /// Mean, unclamped covariance and their input derivatives: `dmean` is
    /// `k x d` and `dcov[i]` is the `k x k` derivative along input `i`.
    pub fn mean_cov_grad(&self, x: &[T]) -> (Vec<T>, Matrix<T>, Matrix<T>, Vec<Matrix<T>>) {
        let k = self.outputs();
        let d = x.len();
        let mean = self.mean(x);
        let mut dmean = Matrix::zeros(k, d);
        let mut dcov = vec![Matrix::zeros(k, k); d];
        let crosses: Vec<Vec<T>> = (0..k).map(|j| self.cross(x, j)).collect();
        let jacs: Vec<Matrix<T>> = (0..k).map(|j| self.cross_jacobian(x, j)).collect();
        let solved: Vec<Vec<T>> = crosses.iter().map(|c| self.solve(c)).collect();
        let mut g1 = vec![T::zero(); d];
        let mut g2 = vec![T::zero(); d];
        let mut cov = Matrix::zeros(k, k);
        for a in 0..k {
            if !self.is_empty() {
                dmean.row_mut(a).copy_from_slice(&jacs[a].tr_matvec(&self.alpha));
            }
            for b in 0..=a {
                let mut v = self.model.prior_cov(x, a, x, b);
                self.model.prior_cov_grad(x, a, x, b, &mut g1);
                self.model.prior_cov_grad(x, b, x, a, &mut g2);
                let mut g: Vec<T> = g1.iter().zip(&g2).map(|(p, q)| *p + *q).collect();
                if !self.is_empty() {
                    v -= dot(&crosses[a], &solved[b]);
                    let ja = jacs[a].tr_matvec(&solved[b]);
                    let jb = jacs[b].tr_matvec(&solved[a]);
                    for i in 0..d {
                        g[i] -= ja[i] + jb[i];
                    }
                }
                cov[(a, b)] = v;
                cov[(b, a)] = v;
                for i in 0..d {
                    dcov[i][(a, b)] = g[i];
                    dcov[i][(b, a)] = g[i];
                }
            }
        }
        (mean, cov, dmean, dcov)
    }

    /// Lower factor `C_n(x)` with `C C^T = K_n(x, x)` (semidefinite allowed).
    pub fn cholesky_of_cov(&self, x: &[T]) -> Result<Matrix<T>> {
        Ok(Cholesky::semidefinite(&self.cov(x))?.into_factor())
    }

    /// Joint posterior covariance over `(x, output)` pairs.
    pub fn joint_cov(&self, points: &[(Vec<T>, usize)]) -> Matrix<T> {
        let m = points.len();
        let ws: Vec<Vec<T>> = points
            .iter()
            .map(|(x, j)| self.whiten(&self.cross(x, *j)))
            .collect();
        let mut c = Matrix::zeros(m, m);
        for a in 0..m {
            for b in 0..=a {
                let (xa, ja) = &points[a];
                let (xb, jb) = &points[b];
                let mut v = self.model.prior_cov(xa, *ja, xb, *jb);
                if !self.is_empty() {
                    v -= dot(&ws[a], &ws[b]);
                }
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
            if self.observed(&points[a].0, points[a].1).is_some() {
                c[(a, a)] = T::zero();
            }
        }
        self.zero_unresolved(&mut c);
        c
    }

    /// `count` joint draws at `points`; row `s` is one sample.
    pub fn sample_joint(&self, points: &[(Vec<T>, usize)], count: usize, seed: u64) -> Result<Matrix<T>> {
        let m = points.len();
        let cov = self.joint_cov(points);
        let l = Cholesky::semidefinite(&cov)?.into_factor();
        let mean: Vec<T> = points.iter().map(|(x, j)| self.mean_at(x, *j)).collect();
        let z = qmc::normal_draws(seed, 0, count, m);
        let mut out = Matrix::zeros(count, m);
        for s in 0..count {
            let zs: Vec<T> = z.row(s).iter().map(|&v| T::lit(v)).collect();
            let row = out.row_mut(s);
            for a in 0..m {
                let lrow = l.row(a);
                row[a] = mean[a] + dot(&lrow[..=a], &zs[..=a]);
            }
        }
        Ok(out)
    }

    /// Conditions on one more row by extending the factorization; falls back
    /// to a full refactorization if the new pivot is not positive.
    pub fn condition_on(&self, x: Vec<T>, tag: usize, y: T, cost: T) -> Result<Self> {
        let mut data = self.data.clone();
        data.push(x, tag, y, cost)?;
        let last = data.records().last().expect("just pushed");
        let extended = match &self.chol {
            Some(c) => {
                let col = self.cross(&last.x, last.tag);
                let a = self.model.prior_cov(&last.x, last.tag, &last.x, last.tag)
                    + data.noise()[last.tag];
                c.extend(&col, a)
            }
            None => None,
        };
        match extended {
            Some(chol) => {
                let mut post = Self {
                    model: self.model.clone(),
                    data,
                    chol: Some(chol),
                    alpha: Vec::new(),
                    policy: self.policy,
                };
                post.refresh_alpha();
                Ok(post)
            }
            None => Self::with_jitter_policy(self.model.clone(), data, self.policy),
        }
    }

    /// Scalar posterior of `p^T h`.
    pub fn functional(&self, p: Vec<T>) -> Result<FunctionalView<'_, T>> {
        if p.len() != self.outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.outputs(),
                got: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("functional weights must be finite".into()));
        }
        Ok(FunctionalView { post: self, p })
    }
}

/// Posterior of the scalar process `p^T h(x)`, with mean `p^T mu_n` and
/// covariance `p^T K_n p`.
#[derive(Clone, Debug)]
pub struct FunctionalView<'a, T> {
    post: &'a MoGpPosterior<T>,
    p: Vec<T>,
}

impl<T: Real> FunctionalView<'_, T> {
    pub fn weights(&self) -> &[T] {
        &self.p
    }

    pub fn posterior(&self) -> &MoGpPosterior<T> {
        self.post
    }

    pub fn mean(&self, x: &[T]) -> T {
        self.post
            .mean(x)
            .iter()
            .zip(&self.p)
            .map(|(m, p)| *m * *p)
            .sum()
    }

    /// Input gradient of [`Self::mean`].
    pub fn mean_grad(&self, x: &[T]) -> Vec<T> {
        if self.post.is_empty() {
            return vec![T::zero(); x.len()];
        }
        self.post
            .functional_cross_jacobian(x, &self.p)
            .tr_matvec(self.post.alpha())
    }

    pub fn cov(&self, x: &[T], x2: &[T]) -> T {
        let c = self.post.cross_cov(x, x2);
        let cp = c.matvec(&self.p);
        dot(&self.p, &cp)
    }

    pub fn variance(&self, x: &[T]) -> T {
        let c = self.post.cov(x);
        dot(&self.p, &c.matvec(&self.p)).max(T::zero())
    }

    /// The functional `q p`.
    pub fn scaled(&self, q: T) -> Self {
        Self {
            post: self.post,
            p: self.p.iter().map(|v| *v * q).collect(),
        }
    }
}
