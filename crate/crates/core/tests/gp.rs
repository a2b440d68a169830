//! Single-output GP behaviour against closed forms and a dense nalgebra oracle.

use approx::assert_abs_diff_eq;
use greybox_core::gp::{
    fit_hyperparameters, fit_with_options, log_marginal_likelihood, Dataset, FitOptions, GpPosterior, Kernel,
    KernelFamily, MeanFunction, NoiseOption,
};
use greybox_core::qmc;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn unit_se(d: usize) -> Kernel<f64> {
    Kernel::isotropic(KernelFamily::SquaredExponential, d, 1.0).unwrap()
}

#[test]
fn prior_mean_and_variance() {
    let gp = GpPosterior::prior(unit_se(2), MeanFunction::Zero);
    assert_eq!(gp.mean(&[0.3, -4.0]), 0.0);
    let k = Kernel::new(KernelFamily::Matern52, vec![0.5, 2.0], 3.5).unwrap();
    let gp = GpPosterior::prior(k, MeanFunction::Zero);
    assert_eq!(gp.cov(&[1.0, 2.0], &[1.0, 2.0]), 3.5);
}

#[test]
fn one_noiseless_datum() {
    let data = Dataset::from_records(vec![vec![0.0]], vec![2.0], 0.0).unwrap();
    let gp = GpPosterior::new(unit_se(1), MeanFunction::Zero, data).unwrap();
    // The default jitter of 1e-8 times the output scale perturbs the fit at that order.
    assert_abs_diff_eq!(gp.mean(&[0.0]), 2.0, epsilon = 1e-7);
    assert!(gp.cov(&[0.0], &[0.0]).abs() <= 1e-8);
    assert_abs_diff_eq!(gp.mean(&[1.0]), 1.213_061_319_425_267, epsilon = 1e-7);
    assert_abs_diff_eq!(gp.cov(&[1.0], &[1.0]), 0.632_120_558_828_557_7, epsilon = 1e-8);
}

#[test]
fn noiseless_data_are_reproduced_exactly() {
    // Nearly coincident points make the jittered interpolant miss the data.
    let xs = vec![vec![0.0], vec![1e-3], vec![0.5]];
    let ys = vec![1.0, -1.0, 0.3];
    let data = Dataset::from_records(xs.clone(), ys.clone(), 0.0).unwrap();
    let gp = GpPosterior::new(unit_se(1), MeanFunction::Zero, data).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        assert_eq!(gp.mean(x), *y);
        assert_eq!(gp.variance(x), 0.0);
        assert_eq!(gp.mean_variance(x), (*y, 0.0));
    }
    let off = [2e-3];
    assert!(gp.variance(&off) > 0.0);
}

#[test]
fn scalar_log_likelihood() {
    let data = Dataset::from_records(vec![vec![0.0]], vec![0.0], 1.0).unwrap();
    let lml = log_marginal_likelihood(&unit_se(1), &MeanFunction::Zero, &data).unwrap();
    assert_abs_diff_eq!(lml, -1.265_512_123_484_645_4, epsilon = 1e-8);
}

fn dense_lml(k: &Kernel<f64>, m: f64, data: &Dataset<f64>) -> f64 {
    let xs = data.xs();
    let n = xs.len();
    let mut kxx = DMatrix::from_fn(n, n, |i, j| k.eval(&xs[i], &xs[j]));
    for i in 0..n {
        kxx[(i, i)] += data.noise_variance() + 1e-8 * k.output_scale();
    }
    let r = DVector::from_iterator(n, data.ys().iter().map(|y| y - m));
    let inv = kxx.clone().try_inverse().unwrap();
    let quad = (r.transpose() * inv * &r)[(0, 0)];
    -0.5 * quad - 0.5 * kxx.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn log_likelihood_matches_dense_oracle() {
    let mut rng = qmc::rng(5, 0);
    for trial in 0..20 {
        let d = 1 + trial % 3;
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let family = if trial % 2 == 0 { KernelFamily::Matern52 } else { KernelFamily::SquaredExponential };
        let k = Kernel::new(family, (0..d).map(|_| rng.random_range(0.2..1.0)).collect(), 1.7).unwrap();
        let data = Dataset::from_records(xs, ys, 0.05).unwrap();
        let m = 0.4;
        let ours = log_marginal_likelihood(&k, &MeanFunction::Constant(m), &data).unwrap();
        assert_abs_diff_eq!(ours, dense_lml(&k, m, &data), epsilon = 1e-8);
    }
}

#[test]
fn posterior_matches_dense_conditioning() {
    let mut rng = qmc::rng(6, 0);
    let xs: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (4.0 * x[0]).sin() + x[1]).collect();
    let k = Kernel::new(KernelFamily::Matern52, vec![0.3, 0.5], 1.2).unwrap();
    let data = Dataset::from_records(xs.clone(), ys.clone(), 1e-3).unwrap();
    let gp = GpPosterior::new(k.clone(), MeanFunction::Constant(0.1), data).unwrap();
    let test = [vec![0.2, 0.7], vec![0.9, 0.1], vec![0.5, 0.5]];
    let n = xs.len();
    let nugget = 1e-3 + gp.jitter();
    let kxx = DMatrix::from_fn(n, n, |i, j| k.eval(&xs[i], &xs[j]) + if i == j { nugget } else { 0.0 });
    let kxt = DMatrix::from_fn(n, 3, |i, j| k.eval(&xs[i], &test[j]));
    let chol = kxx.cholesky().unwrap();
    let r = DVector::from_iterator(n, ys.iter().map(|y| y - 0.1));
    let mean = kxt.transpose() * chol.solve(&r);
    let cov = DMatrix::from_fn(3, 3, |i, j| k.eval(&test[i], &test[j])) - kxt.transpose() * chol.solve(&kxt);
    for i in 0..3 {
        assert_abs_diff_eq!(gp.mean(&test[i]), mean[i] + 0.1, epsilon = 1e-8);
        for j in 0..3 {
            assert_abs_diff_eq!(gp.cov(&test[i], &test[j]), cov[(i, j)], epsilon = 1e-8);
        }
    }
}

fn sample_prior(lengthscale: f64, n: usize, seed: u64) -> Dataset<f64> {
    let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
    let k = Kernel::new(KernelFamily::SquaredExponential, vec![lengthscale], 1.0).unwrap();
    let mut gram = DMatrix::from_fn(n, n, |i, j| k.eval(&xs[i], &xs[j]));
    for i in 0..n {
        gram[(i, i)] += 1e-6;
    }
    let l = gram.cholesky().unwrap().l();
    let z = qmc::normal_draws(seed, 0, 1, n);
    let ys = l * DVector::from_row_slice(z.row(0));
    Dataset::from_records(xs, ys.iter().copied().collect(), 0.0).unwrap()
}

#[test]
fn recovers_generating_lengthscale() {
    let data = sample_prior(0.3, 40, 3);
    let fit = fit_hyperparameters(&data, KernelFamily::SquaredExponential, 8, 1).unwrap();
    let ls = fit.kernel.lengthscales()[0];
    assert!((0.15..=0.6).contains(&ls), "lengthscale {ls}");
}

#[test]
fn contradictory_duplicates_force_noise() {
    let data = Dataset::from_records(
        vec![vec![0.1], vec![0.5], vec![0.5], vec![0.9]],
        vec![0.0, 1.0, -1.0, 0.3],
        0.0,
    )
    .unwrap();
    let fit = fit_hyperparameters(&data, KernelFamily::Matern52, 4, 0).unwrap();
    assert!(fit.noise_variance > 0.0);
}

#[test]
fn fit_is_deterministic_and_shift_invariant() {
    let data = sample_prior(0.3, 15, 9);
    let a = fit_hyperparameters(&data, KernelFamily::Matern52, 3, 42).unwrap();
    let b = fit_hyperparameters(&data, KernelFamily::Matern52, 3, 42).unwrap();
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.log_likelihood, b.log_likelihood);

    let shifted = data.with_ys(data.ys().iter().map(|y| y + 7.5).collect());
    let opts = FitOptions {
        noise: NoiseOption::Fixed(1e-6),
        restarts: 3,
        seed: 42,
        ..FitOptions::default()
    };
    let a = fit_with_options(&data, KernelFamily::Matern52, &opts).unwrap();
    let b = fit_with_options(&shifted, KernelFamily::Matern52, &opts).unwrap();
    assert_abs_diff_eq!(a.log_likelihood, b.log_likelihood, epsilon = 1e-6);
}
