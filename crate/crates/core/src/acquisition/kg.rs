//! Knowledge gradient for a linear functional `f = p^T h` of a multi-output
//! posterior, with the fantasy observation taken at one output `(x, tag)`.
//!
//! Plain black-box KG is the one-output case `p = [1]`, multi-fidelity KG
//! targets the last output, and constituent KG uses the constituent weights.

use crate::acquisition::envelope;
use crate::error::{Error, Result};
use crate::gp::{GpPosterior, SearchDomain};
use crate::linalg::{dot, Matrix};
use crate::multioutput::MoGpPosterior;
use crate::optimize::{maximize_deterministic, Maximum, OptimizerConfig};

/// Inner-maximization strategy of a Monte-Carlo KG estimate.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerMax {
    /// Maximize over a fixed point set (the candidate is not added).
    Discrete(Vec<Vec<f64>>),
    /// One fantasy solution per draw, and the current maximum of the
    /// posterior mean as the baseline.
    OneShot {
        fantasies: Vec<Vec<f64>>,
        baseline: f64,
    },
}

/// Fixed standard normal draws and an inner-max strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct KgSamplePlan {
    pub draws: Vec<f64>,
    pub inner: InnerMax,
}

impl KgSamplePlan {
    pub fn discrete(draws: Vec<f64>, points: Vec<Vec<f64>>) -> Self {
        Self {
            draws,
            inner: InnerMax::Discrete(points),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws.is_empty() {
            return Err(Error::InvalidArgument("a sample plan needs at least one draw".into()));
        }
        match &self.inner {
            InnerMax::Discrete(p) if p.is_empty() => {
                Err(Error::InvalidArgument("empty discretization".into()))
            }
            InnerMax::OneShot { fantasies, .. } if fantasies.len() != self.draws.len() => {
                Err(Error::DimensionMismatch {
                    expected: self.draws.len(),
                    got: fantasies.len(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KgEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Posterior quantities of the target functional at one point.
#[derive(Clone, Debug)]
pub struct TargetPoint {
    pub x: Vec<f64>,
    pub mean: f64,
    /// Prior covariance of `f(x)` with each conditioning row.
    kf: Vec<f64>,
    /// `K^{-1} kf`
    sf: Vec<f64>,
}

/// Posterior quantities of the fantasy observation `y = h_tag(x) + eps`.
#[derive(Clone, Debug)]
pub struct Fantasy {
    pub x: Vec<f64>,
    pub tag: usize,
    sc: Vec<f64>,
    jc: Matrix<f64>,
    /// Predictive variance of the observation, including noise.
    pub variance: f64,
    variance_grad: Vec<f64>,
}

/// Target functional plus posterior.
#[derive(Clone, Debug)]
pub struct KgModel<'a> {
    post: &'a MoGpPosterior<f64>,
    p: Vec<f64>,
    floor: f64,
}

impl<'a> KgModel<'a> {
    pub fn new(post: &'a MoGpPosterior<f64>, p: Vec<f64>) -> Result<Self> {
        if p.len() != post.outputs() {
            return Err(Error::DimensionMismatch {
                expected: post.outputs(),
                got: p.len(),
            });
        }
        let floor = 1e-12 * post.model().variance_scale().max(f64::MIN_POSITIVE);
        Ok(Self { post, p, floor })
    }

    /// The target is output `j`.
    pub fn output(post: &'a MoGpPosterior<f64>, j: usize) -> Result<Self> {
        let mut p = vec![0.0; post.outputs()];
        if j >= p.len() {
            return Err(Error::InvalidArgument(format!("output {j} out of range")));
        }
        p[j] = 1.0;
        Self::new(post, p)
    }

    pub fn posterior(&self) -> &MoGpPosterior<f64> {
        self.post
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.post.input_dim()
    }

    pub fn target(&self, x: &[f64]) -> TargetPoint {
        let kf = self.post.functional_cross(x, &self.p);
        let prior: f64 = self
            .p
            .iter()
            .enumerate()
            .map(|(j, pj)| pj * self.post.model().prior_mean(x, j))
            .sum();
        let mean = prior + dot(&kf, self.post.alpha());
        let sf = self.post.solve(&kf);
        TargetPoint {
            x: x.to_vec(),
            mean,
            kf,
            sf,
        }
    }

    /// Input gradient of the target mean (prior means are constant).
    pub fn target_mean_grad(&self, x: &[f64]) -> Vec<f64> {
        if self.post.is_empty() {
            return vec![0.0; x.len()];
        }
        self.post
            .functional_cross_jacobian(x, &self.p)
            .tr_matvec(self.post.alpha())
    }

    pub fn fantasy(&self, x: &[f64], tag: usize) -> Fantasy {
        let model = self.post.model();
        let d = x.len();
        let kc = self.post.cross(x, tag);
        let sc = self.post.solve(&kc);
        let jc = self.post.cross_jacobian(x, tag);
        let noise = self.post.data().noise()[tag];
        let mut g = vec![0.0; d];
        model.prior_cov_grad(x, tag, x, tag, &mut g);
        let mut variance = model.prior_cov(x, tag, x, tag) + noise;
        let mut variance_grad: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        if !self.post.is_empty() {
            variance -= dot(&kc, &sc);
            let js = jc.tr_matvec(&sc);
            for (vg, j) in variance_grad.iter_mut().zip(js) {
                *vg -= 2.0 * j;
            }
        }
        Fantasy {
            x: x.to_vec(),
            tag,
            sc,
            jc,
            variance,
            variance_grad,
        }
    }

    fn prior_target_fantasy(&self, xt: &[f64], f: &Fantasy) -> f64 {
        let model = self.post.model();
        self.p
            .iter()
            .enumerate()
            .filter(|(_, pj)| **pj != 0.0)
            .map(|(a, pj)| pj * model.prior_cov(xt, a, &f.x, f.tag))
            .sum()
    }

    /// `Cov_n(f(xt), y_fantasy)`
    fn cov_target_fantasy(&self, t: &TargetPoint, f: &Fantasy) -> f64 {
        let prior = self.prior_target_fantasy(&t.x, f);
        if self.post.is_empty() {
            prior
        } else {
            prior - dot(&t.kf, &f.sc)
        }
    }

    /// Gradient of [`Self::cov_target_fantasy`] in the fantasy location.
    fn cov_grad_fantasy(&self, t: &TargetPoint, f: &Fantasy) -> Vec<f64> {
        let model = self.post.model();
        let d = f.x.len();
        let mut out = vec![0.0; d];
        let mut g = vec![0.0; d];
        for (a, &pj) in self.p.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            model.prior_cov_grad(&f.x, f.tag, &t.x, a, &mut g);
            for (o, gv) in out.iter_mut().zip(&g) {
                *o += pj * gv;
            }
        }
        if !self.post.is_empty() {
            let js = f.jc.tr_matvec(&t.sf);
            for (o, j) in out.iter_mut().zip(js) {
                *o -= j;
            }
        }
        out
    }

    /// Gradient of [`Self::cov_target_fantasy`] in the target location.
    fn cov_grad_target(&self, t: &TargetPoint, f: &Fantasy) -> Vec<f64> {
        let model = self.post.model();
        let d = t.x.len();
        let mut out = vec![0.0; d];
        let mut g = vec![0.0; d];
        for (a, &pj) in self.p.iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            model.prior_cov_grad(&t.x, a, &f.x, f.tag, &mut g);
            for (o, gv) in out.iter_mut().zip(&g) {
                *o += pj * gv;
            }
        }
        if !self.post.is_empty() {
            let jf = self.post.functional_cross_jacobian(&t.x, &self.p);
            let js = jf.tr_matvec(&f.sc);
            for (o, j) in out.iter_mut().zip(js) {
                *o -= j;
            }
        }
        out
    }

    fn degenerate(&self, f: &Fantasy) -> bool {
        !(f.variance > self.floor)
    }

    /// `sigma~(xt; fantasy) = Cov_n(f(xt), y) / sqrt(Var_n(y))`, zero when
    /// the observation has no predictive variance.
    pub fn slope(&self, t: &TargetPoint, f: &Fantasy) -> f64 {
        if self.degenerate(f) {
            return 0.0;
        }
        self.cov_target_fantasy(t, f) / f.variance.sqrt()
    }

    /// Slope and its gradient in the fantasy location.
    pub fn slope_grad_fantasy(&self, t: &TargetPoint, f: &Fantasy) -> (f64, Vec<f64>) {
        let d = f.x.len();
        if self.degenerate(f) {
            return (0.0, vec![0.0; d]);
        }
        let c = self.cov_target_fantasy(t, f);
        let dc = self.cov_grad_fantasy(t, f);
        let v = f.variance;
        let sv = v.sqrt();
        let grad = dc
            .iter()
            .zip(&f.variance_grad)
            .map(|(dci, dvi)| dci / sv - c * dvi / (2.0 * v * sv))
            .collect();
        (c / sv, grad)
    }

    /// Gradient of the slope in the target location.
    pub fn slope_grad_target(&self, t: &TargetPoint, f: &Fantasy) -> Vec<f64> {
        if self.degenerate(f) {
            return vec![0.0; t.x.len()];
        }
        let sv = f.variance.sqrt();
        self.cov_grad_target(t, f).into_iter().map(|g| g / sv).collect()
    }

    /// Largest posterior mean of the target over `domain`.
    pub fn max_mean(
        &self,
        domain: &SearchDomain<f64>,
        config: &OptimizerConfig,
        extra_starts: &[Vec<f64>],
    ) -> Maximum {
        maximize_deterministic(
            |x: &[f64], g: &mut [f64]| {
                g.copy_from_slice(&self.target_mean_grad(x));
                self.target(x).mean
            },
            domain,
            config,
            extra_starts,
        )
    }
}

/// Discretized KG with the lines for a fixed point set precomputed.
///
/// When `include_candidate` is set, the target functional at the candidate
/// `x` itself joins the point set. The baseline is the largest current mean
/// over the same set, so the value is never negative.
#[derive(Clone, Debug)]
pub struct DiscreteKg<'a> {
    model: KgModel<'a>,
    targets: Vec<TargetPoint>,
    include_candidate: bool,
}

/// Lines `a_i + b_i Z` of one candidate with their gradients in `x`.
struct Lines {
    a: Vec<f64>,
    b: Vec<f64>,
    da: Option<Vec<f64>>,
    db: Vec<Vec<f64>>,
}

impl<'a> DiscreteKg<'a> {
    pub fn new(model: KgModel<'a>, points: &[Vec<f64>], include_candidate: bool) -> Result<Self> {
        if points.is_empty() && !include_candidate {
            return Err(Error::InvalidArgument("empty discretization".into()));
        }
        let targets = points.iter().map(|x| model.target(x)).collect();
        Ok(Self {
            model,
            targets,
            include_candidate,
        })
    }

    pub fn model(&self) -> &KgModel<'a> {
        &self.model
    }

    fn lines(&self, x: &[f64], tag: usize, with_grad: bool) -> Lines {
        let f = self.model.fantasy(x, tag);
        let m = self.targets.len() + usize::from(self.include_candidate);
        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut db = Vec::new();
        for t in &self.targets {
            a.push(t.mean);
            if with_grad {
                let (s, g) = self.model.slope_grad_fantasy(t, &f);
                b.push(s);
                db.push(g);
            } else {
                b.push(self.model.slope(t, &f));
            }
        }
        let mut da = None;
        if self.include_candidate {
            let t = self.model.target(x);
            a.push(t.mean);
            if with_grad {
                let (s, mut g) = self.model.slope_grad_fantasy(&t, &f);
                for (gi, hi) in g.iter_mut().zip(self.model.slope_grad_target(&t, &f)) {
                    *gi += hi;
                }
                b.push(s);
                db.push(g);
                da = Some(self.model.target_mean_grad(x));
            } else {
                b.push(self.model.slope(&t, &f));
            }
        }
        Lines { a, b, da, db }
    }

    pub fn value(&self, x: &[f64], tag: usize) -> f64 {
        let l = self.lines(x, tag, false);
        (envelope::expected_max(&l.a, &l.b) - max_of(&l.a).1).max(0.0)
    }

    pub fn value_grad(&self, x: &[f64], tag: usize, grad: &mut [f64]) -> f64 {
        let l = self.lines(x, tag, true);
        let (e, dea, deb) = envelope::expected_max_grad(&l.a, &l.b);
        let (imax, amax) = max_of(&l.a);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, dbi) in l.db.iter().enumerate() {
            if deb[i] != 0.0 {
                for (g, v) in grad.iter_mut().zip(dbi) {
                    *g += deb[i] * v;
                }
            }
        }
        if let Some(da) = &l.da {
            let last = l.a.len() - 1;
            let w = dea[last] - if imax == last { 1.0 } else { 0.0 };
            for (g, v) in grad.iter_mut().zip(da) {
                *g += w * v;
            }
        }
        e - amax
    }

    /// Monte-Carlo estimate over the same lines.
    pub fn value_mc(&self, x: &[f64], tag: usize, draws: &[f64]) -> KgEstimate {
        let l = self.lines(x, tag, false);
        let base = max_of(&l.a).1;
        let samples: Vec<f64> = draws
            .iter()
            .map(|&z| max_line(&l.a, &l.b, z).1 - base)
            .collect();
        estimate(&samples)
    }

    /// One unbiased gradient sample for stochastic gradient ascent: the
    /// gradient of `max_i (a_i + b_i z) - max_i a_i` at the drawn `z`.
    pub fn gradient_sample(&self, x: &[f64], tag: usize, z: f64, grad: &mut [f64]) {
        let l = self.lines(x, tag, true);
        let (istar, _) = max_line(&l.a, &l.b, z);
        let (imax, _) = max_of(&l.a);
        for (g, v) in grad.iter_mut().zip(&l.db[istar]) {
            *g = z * v;
        }
        if let Some(da) = &l.da {
            let last = l.a.len() - 1;
            let w = f64::from(u8::from(istar == last)) - f64::from(u8::from(imax == last));
            for (g, v) in grad.iter_mut().zip(da) {
                *g += w * v;
            }
        }
    }
}

/// First index of the largest entry.
fn max_of(a: &[f64]) -> (usize, f64) {
    let mut best = (0, a[0]);
    for (i, &v) in a.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn max_line(a: &[f64], b: &[f64], z: f64) -> (usize, f64) {
    let mut best = (0, a[0] + b[0] * z);
    for i in 1..a.len() {
        let v = a[i] + b[i] * z;
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn estimate(samples: &[f64]) -> KgEstimate {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    KgEstimate {
        value: mean,
        std_error: (var / m).sqrt(),
    }
}

/// Exact discretized KG of a single-output posterior over `points`.
pub fn kg_discretized(gp: &GpPosterior<f64>, x: &[f64], points: &[Vec<f64>]) -> Result<f64> {
    let mo = MoGpPosterior::from_single(gp);
    let kg = DiscreteKg::new(KgModel::new(&mo, vec![1.0])?, points, false)?;
    Ok(kg.value(x, 0))
}

/// Monte-Carlo KG of a single-output posterior.
pub fn kg_value(gp: &GpPosterior<f64>, x: &[f64], plan: &KgSamplePlan) -> Result<KgEstimate> {
    let mo = MoGpPosterior::from_single(gp);
    kg_value_mo(&KgModel::new(&mo, vec![1.0])?, x, 0, plan)
}

/// Monte-Carlo KG of a functional with the fantasy at `(x, tag)`.
pub fn kg_value_mo(model: &KgModel<'_>, x: &[f64], tag: usize, plan: &KgSamplePlan) -> Result<KgEstimate> {
    plan.validate()?;
    match &plan.inner {
        InnerMax::Discrete(points) => {
            Ok(DiscreteKg::new(model.clone(), points, false)?.value_mc(x, tag, &plan.draws))
        }
        InnerMax::OneShot {
            fantasies,
            baseline,
        } => {
            let f = model.fantasy(x, tag);
            let samples: Vec<f64> = fantasies
                .iter()
                .zip(&plan.draws)
                .map(|(xp, &z)| {
                    let t = model.target(xp);
                    t.mean + model.slope(&t, &f) * z - baseline
                })
                .collect();
            Ok(estimate(&samples))
        }
    }
}

/// Sample-average one-shot KG objective on the joint vector
/// `(x, x'_1, .., x'_M)` with fixed draws.
#[derive(Clone, Debug)]
pub struct OneShotKg<'a> {
    pub model: KgModel<'a>,
    pub tag: usize,
    pub draws: Vec<f64>,
    pub baseline: f64,
}

impl OneShotKg<'_> {
    pub fn value_grad(&self, joint: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.model.dim();
        let m = self.draws.len();
        assert_eq!(joint.len(), d * (m + 1));
        let x = &joint[..d];
        let f = self.model.fantasy(x, self.tag);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let inv_m = 1.0 / m as f64;
        let mut total = 0.0;
        for (s, &z) in self.draws.iter().enumerate() {
            let xp = &joint[d * (s + 1)..d * (s + 2)];
            let t = self.model.target(xp);
            let (b, db_x) = self.model.slope_grad_fantasy(&t, &f);
            total += t.mean + b * z;
            for (g, v) in grad[..d].iter_mut().zip(&db_x) {
                *g += inv_m * z * v;
            }
            let dmean = self.model.target_mean_grad(xp);
            let db_t = self.model.slope_grad_target(&t, &f);
            for ((g, dm), dt) in grad[d * (s + 1)..d * (s + 2)].iter_mut().zip(dmean).zip(db_t) {
                *g = inv_m * (dm + z * dt);
            }
        }
        total * inv_m - self.baseline
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, Kernel, KernelFamily, MeanFunction};

    fn gp() -> GpPosterior<f64> {
        let data = Dataset::from_records(
            vec![vec![0.1, 0.2], vec![0.8, 0.4], vec![0.5, 0.9]],
            vec![1.0, -0.5, 0.3],
            1e-4,
        )
        .unwrap();
        let k = Kernel::new(KernelFamily::Matern52, vec![0.4, 0.6], 1.3).unwrap();
        GpPosterior::new(k, MeanFunction::Constant(0.2), data).unwrap()
    }

    fn grid() -> Vec<Vec<f64>> {
        (0..25).map(|i| vec![(i % 5) as f64 / 4.0, (i / 5) as f64 / 4.0]).collect()
    }

    #[test]
    fn discrete_gradient_matches_finite_differences() {
        let g = gp();
        let mo = MoGpPosterior::from_single(&g);
        for include in [false, true] {
            let kg = DiscreteKg::new(KgModel::new(&mo, vec![1.0]).unwrap(), &grid(), include).unwrap();
            let x = [0.33, 0.61];
            let mut grad = [0.0; 2];
            let v = kg.value_grad(&x, 0, &mut grad);
            assert!((v - kg.value(&x, 0)).abs() < 1e-12);
            for i in 0..2 {
                let h = 1e-6;
                let (mut p, mut m) = (x, x);
                p[i] += h;
                m[i] -= h;
                let fd = (kg.value(&p, 0) - kg.value(&m, 0)) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{include} {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn one_shot_gradient_matches_finite_differences() {
        let g = gp();
        let mo = MoGpPosterior::from_single(&g);
        let os = OneShotKg {
            model: KgModel::new(&mo, vec![1.0]).unwrap(),
            tag: 0,
            draws: vec![0.7, -1.2, 0.3],
            baseline: 0.9,
        };
        let joint = [0.3, 0.6, 0.2, 0.25, 0.7, 0.45, 0.55, 0.8];
        let mut grad = [0.0; 8];
        os.value_grad(&joint, &mut grad);
        let mut scratch = [0.0; 8];
        for i in 0..8 {
            let h = 1e-6;
            let (mut p, mut m) = (joint, joint);
            p[i] += h;
            m[i] -= h;
            let fd = (os.value_grad(&p, &mut scratch) - os.value_grad(&m, &mut scratch)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", grad[i]);
        }
    }
}
