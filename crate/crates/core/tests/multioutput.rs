//! Multi-output posteriors: reductions, dense conditioning and sampling.

use approx::assert_abs_diff_eq;
use greybox_core::gp::{Kernel, KernelFamily, MeanFunction};
use greybox_core::linalg::{Cholesky, Matrix};
use greybox_core::multioutput::{MoGpPosterior, MultiOutputModel, TaggedDataset};
use nalgebra::{DMatrix, DVector};

fn k(ls: f64, s: f64) -> Kernel<f64> {
    Kernel::new(KernelFamily::Matern52, vec![ls, ls], s).unwrap()
}

fn independent() -> MultiOutputModel<f64> {
    MultiOutputModel::independent(vec![k(0.3, 1.0), k(0.5, 2.0)], vec![MeanFunction::Zero, MeanFunction::Constant(1.0)])
        .unwrap()
}

#[test]
fn unobserved_independent_output_keeps_its_prior() {
    let mut data = TaggedDataset::new(vec![1e-4, 1e-4]).unwrap();
    data.push(vec![0.2, 0.3], 0, 0.7, 1.0).unwrap();
    data.push(vec![0.6, 0.1], 0, -0.4, 1.0).unwrap();
    let post = MoGpPosterior::new(independent(), data).unwrap();
    let x = [0.25, 0.3];
    assert_eq!(post.mean_at(&x, 1), 1.0);
    assert_eq!(post.cov_at(&x, 1, &x, 1), 2.0);
}

#[test]
fn identity_coregionalization_equals_independent() {
    let kern = k(0.4, 1.0);
    let ind = MultiOutputModel::independent(vec![kern.clone(), kern.clone()], vec![MeanFunction::Zero; 2]).unwrap();
    let icm = MultiOutputModel::coregionalized(Matrix::identity(2), kern, vec![MeanFunction::Zero; 2]).unwrap();
    let mut data = TaggedDataset::new(vec![1e-3, 1e-3]).unwrap();
    data.push(vec![0.1, 0.1], 0, 1.0, 1.0).unwrap();
    data.push(vec![0.5, 0.9], 1, -1.0, 1.0).unwrap();
    data.push(vec![0.8, 0.3], 0, 0.2, 1.0).unwrap();
    let a = MoGpPosterior::new(ind, data.clone()).unwrap();
    let b = MoGpPosterior::new(icm, data).unwrap();
    for x in [[0.3, 0.3], [0.7, 0.2]] {
        let (ma, ca) = a.mean_cov(&x);
        let (mb, cb) = b.mean_cov(&x);
        for j in 0..2 {
            assert_abs_diff_eq!(ma[j], mb[j], epsilon = 1e-12);
        }
        assert!(ca.max_abs_diff(&cb) < 1e-12);
    }
}

#[test]
fn latent_factor_covariance_structure() {
    let target = k(0.4, 1.5);
    let bias = k(0.2, 0.3);
    let m = MultiOutputModel::latent_factor(target.clone(), MeanFunction::Zero, vec![bias.clone()], vec![MeanFunction::Zero])
        .unwrap();
    let (x, y) = ([0.1, 0.2], [0.4, 0.6]);
    assert_abs_diff_eq!(m.prior_cov(&x, 0, &y, 1), target.eval(&x, &y), epsilon = 1e-14);
    assert_abs_diff_eq!(m.prior_cov(&x, 0, &x, 0), bias.eval(&x, &x) + target.eval(&x, &x), epsilon = 1e-14);
}

#[test]
fn prior_and_full_noiseless_observation() {
    let post = MoGpPosterior::prior(independent());
    let (m, c) = post.mean_cov(&[0.5, 0.5]);
    assert_eq!(m, vec![0.0, 1.0]);
    assert_eq!(c.diagonal(), vec![1.0, 2.0]);

    let mut data = TaggedDataset::noiseless(2).unwrap();
    data.push_all(&[0.5, 0.5], &[3.0, -2.0], 1.0).unwrap();
    let post = MoGpPosterior::new(independent(), data).unwrap();
    let (m, c) = post.mean_cov(&[0.5, 0.5]);
    assert_abs_diff_eq!(m[0], 3.0, epsilon = 1e-6);
    assert_abs_diff_eq!(m[1], -2.0, epsilon = 1e-6);
    assert!(c.max_abs_diff(&Matrix::zeros(2, 2)) < 1e-6);
}

#[test]
fn one_output_observed_matches_dense_joint_conditioning() {
    let model = MultiOutputModel::coregionalized(
        Matrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 0.8]),
        k(0.35, 1.0),
        vec![MeanFunction::Zero; 2],
    )
    .unwrap();
    let obs = [(vec![0.2, 0.4], 0, 0.9), (vec![0.7, 0.5], 0, -0.3), (vec![0.4, 0.9], 0, 0.1)];
    let mut data = TaggedDataset::new(vec![1e-2, 1e-2]).unwrap();
    for (x, t, y) in &obs {
        data.push(x.clone(), *t, *y, 1.0).unwrap();
    }
    let post = MoGpPosterior::new(model.clone(), data).unwrap();
    let q = [0.3, 0.6];
    let n = obs.len();
    let jitter = post.jitter();
    let kxx = DMatrix::from_fn(n, n, |i, j| {
        model.prior_cov(&obs[i].0, obs[i].1, &obs[j].0, obs[j].1) + if i == j { 1e-2 + jitter } else { 0.0 }
    });
    let kxq = DMatrix::from_fn(n, 2, |i, j| model.prior_cov(&obs[i].0, obs[i].1, &q, j));
    let kqq = DMatrix::from_fn(2, 2, |i, j| model.prior_cov(&q, i, &q, j));
    let y = DVector::from_iterator(n, obs.iter().map(|o| o.2));
    let chol = kxx.cholesky().unwrap();
    let mean = kxq.transpose() * chol.solve(&y);
    let cov = kqq - kxq.transpose() * chol.solve(&kxq);
    let (m, c) = post.mean_cov(&q);
    for i in 0..2 {
        assert_abs_diff_eq!(m[i], mean[i], epsilon = 1e-8);
        for j in 0..2 {
            assert_abs_diff_eq!(c[(i, j)], cov[(i, j)], epsilon = 1e-8);
        }
    }
}

#[test]
fn psd_factor_examples() {
    let l = Cholesky::semidefinite(&Matrix::from_diagonal(&[4.0, 9.0])).unwrap();
    assert_eq!(l.factor_matrix().diagonal(), vec![2.0, 3.0]);
    let z = Cholesky::semidefinite(&Matrix::<f64>::zeros(3, 3)).unwrap();
    assert_eq!(z.factor_matrix(), &Matrix::zeros(3, 3));
    let b = Matrix::from_row_slice(3, 3, &[1.0, 0.2, -0.4, 0.3, 2.0, 0.1, -0.5, 0.7, 1.5]);
    let a = b.matmul(&b.transpose());
    let l = Cholesky::semidefinite(&a).unwrap();
    assert!(l.reconstruct().max_abs_diff(&a) <= 1e-8);
}

#[test]
fn functional_views() {
    let mut data = TaggedDataset::new(vec![1e-3, 1e-3]).unwrap();
    data.push(vec![0.2, 0.2], 0, 0.5, 1.0).unwrap();
    data.push(vec![0.8, 0.6], 1, 1.5, 1.0).unwrap();
    let post = MoGpPosterior::new(independent(), data).unwrap();
    let x = [0.4, 0.4];
    let e1 = post.functional(vec![0.0, 1.0]).unwrap();
    assert_abs_diff_eq!(e1.mean(&x), post.mean_at(&x, 1), epsilon = 1e-14);
    assert_abs_diff_eq!(e1.variance(&x), post.cov_at(&x, 1, &x, 1), epsilon = 1e-14);
    let sum = post.functional(vec![1.0, 1.0]).unwrap();
    assert_abs_diff_eq!(
        sum.variance(&x),
        post.cov_at(&x, 0, &x, 0) + post.cov_at(&x, 1, &x, 1),
        epsilon = 1e-12
    );

    // Monte-Carlo check of the functional's moments.
    let p = [0.7, -1.3];
    let view = post.functional(p.to_vec()).unwrap();
    let draws = post.sample_joint(&[(x.to_vec(), 0), (x.to_vec(), 1)], 100_000, 4).unwrap();
    let vals: Vec<f64> = (0..draws.rows()).map(|s| p[0] * draws[(s, 0)] + p[1] * draws[(s, 1)]).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = view.variance(&x).sqrt();
    assert!((mean - view.mean(&x)).abs() <= 3.0 * sd / n.sqrt());
    // Sample variance has standard error about var * sqrt(2 / n).
    assert!((var - view.variance(&x)).abs() <= 3.0 * view.variance(&x) * (2.0 / n).sqrt());
}

#[test]
fn joint_sampling() {
    let mut data = TaggedDataset::noiseless(2).unwrap();
    data.push_all(&[0.5, 0.5], &[3.0, -2.0], 1.0).unwrap();
    let post = MoGpPosterior::new(independent(), data).unwrap();
    let at = [(vec![0.5, 0.5], 0)];
    // Draws at a noiseless datum are the datum.
    let s = post.sample_joint(&at, 5, 1).unwrap();
    for r in 0..5 {
        assert_eq!(s[(r, 0)], 3.0);
    }

    let q = [(vec![0.1, 0.9], 1)];
    let s = post.sample_joint(&q, 100_000, 2).unwrap();
    let mean = (0..s.rows()).map(|r| s[(r, 0)]).sum::<f64>() / 1e5;
    let sd = post.cov_at(&q[0].0, 1, &q[0].0, 1).sqrt();
    assert!((mean - post.mean_at(&q[0].0, 1)).abs() <= 3.0 * sd / 1e5f64.sqrt());
    assert_eq!(post.sample_joint(&q, 10, 9).unwrap(), post.sample_joint(&q, 10, 9).unwrap());
}
