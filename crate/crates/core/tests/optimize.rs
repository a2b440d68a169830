//! Acquisition maximizers against grid oracles.

use approx::assert_abs_diff_eq;
use greybox_core::acquisition::{
    ei_analytic, ei_value_grad, eicf_gradient_sample, eicf_value, Incumbent, KgModel, OneShotKg, OuterFunction,
};
use greybox_core::gp::{Dataset, GpPosterior, Kernel, KernelFamily, MeanFunction, SearchDomain};
use greybox_core::multioutput::{MoGpPosterior, MultiOutputModel, TaggedDataset};
use greybox_core::optimize::{maximize_deterministic, maximize_one_shot, maximize_sga, OptimizerConfig, StepRule};
use greybox_core::problems::Problem;
use greybox_core::qmc;

fn quadratic(c: &[f64]) -> impl FnMut(&[f64], &mut [f64]) -> f64 + '_ {
    move |x, g| {
        let mut v = 0.0;
        for i in 0..x.len() {
            g[i] = -2.0 * (x[i] - c[i]);
            v -= (x[i] - c[i]).powi(2);
        }
        v
    }
}

#[test]
fn quadratic_peaks() {
    let dom = SearchDomain::unit(3);
    let cfg = OptimizerConfig::default();
    let m = maximize_deterministic(quadratic(&[0.5, 0.5, 0.5]), &dom, &cfg, &[]);
    for v in &m.x {
        assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-6);
    }
    let m = maximize_deterministic(quadratic(&[1.4, 0.3, -2.0]), &dom, &cfg, &[]);
    assert_eq!(m.x[0], 1.0);
    assert_abs_diff_eq!(m.x[1], 0.3, epsilon = 1e-6);
    assert_eq!(m.x[2], 0.0);
}

fn ei_gp() -> (GpPosterior<f64>, Incumbent) {
    let data = Dataset::from_records(vec![vec![0.15], vec![0.5], vec![0.85]], vec![0.2, 0.6, -0.1], 0.0).unwrap();
    let k = Kernel::new(KernelFamily::Matern52, vec![0.2], 1.0).unwrap();
    let gp = GpPosterior::new(k, MeanFunction::Zero, data).unwrap();
    let inc = Incumbent::best_observed(gp.data().xs(), gp.data().ys()).unwrap();
    (gp, inc)
}

#[test]
fn ei_maximum_matches_grid_scan() {
    let (gp, inc) = ei_gp();
    let dom = SearchDomain::unit(1);
    let m = maximize_deterministic(
        |x, g| {
            let (v, gr) = ei_value_grad(&gp, &inc, x);
            g[0] = gr.map_or(0.0, |gr| gr[0]);
            v
        },
        &dom,
        &OptimizerConfig::default(),
        &[],
    );
    let grid_best = (0..100_000)
        .map(|i| ei_analytic(&gp, &inc, &[i as f64 / 99_999.0]))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((m.value - grid_best).abs() <= 1e-4, "{} vs {grid_best}", m.value);
    if m.x[0] > 1e-6 && m.x[0] < 1.0 - 1e-6 {
        let g = ei_value_grad(&gp, &inc, &m.x).1.unwrap();
        assert!(g[0].abs() <= 1e-6, "gradient {g:?} at {:?}", m.x);
    }
}

fn sga_config(seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        restarts: 4,
        max_iterations: 400,
        step_rule: StepRule::Sga { a: None, b: 10.0 },
        seed,
        ..OptimizerConfig::default()
    }
}

#[test]
fn sga_reductions() {
    let dom = SearchDomain::unit(2);
    let c = [0.2, 0.7];
    let mut f = quadratic(&c);
    let mut scratch = [0.0; 2];
    let mut value = |x: &[f64]| f(x, &mut scratch);
    let mut g = quadratic(&c);
    let s = maximize_sga(|x, _, gr| {
        g(x, gr);
    }, &mut value, &dom, &sga_config(3), &[]);
    let q = maximize_deterministic(quadratic(&c), &dom, &OptimizerConfig::default(), &[]);
    for i in 0..2 {
        assert_abs_diff_eq!(s.x[i], q.x[i], epsilon = 1e-3);
    }
}

/// The square toy `g(h) = -h^2` with four evaluations of `h`.
fn square_toy() -> (Problem, MoGpPosterior<f64>, OuterFunction, Incumbent) {
    let toy = Problem::square_scalar();
    let g = toy.outer().unwrap().clone();
    let model =
        MultiOutputModel::independent(vec![Kernel::new(KernelFamily::SquaredExponential, vec![0.6], 1.0).unwrap()], vec![MeanFunction::Zero])
            .unwrap();
    let mut data = TaggedDataset::noiseless(1).unwrap();
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for x in [-1.9, -0.9, 0.6, 1.2] {
        let h = toy.inner(&[x]).unwrap();
        data.push_all(&[x], &h, 1.0).unwrap();
        xs.push(vec![x]);
        vals.push(g.eval(&h));
    }
    let inc = Incumbent::best_observed(&xs, &vals).unwrap();
    (toy, MoGpPosterior::new(model, data).unwrap(), g, inc)
}

#[test]
fn sga_on_composite_toy_reaches_grid_optimum() {
    let (toy, mo, g, inc) = square_toy();
    let rank = qmc::normal_draws(5, 0, 4096, 1);
    let value = |x: &[f64]| eicf_value(&mo, &g, &inc, x, &rank).unwrap();
    let sampler = |x: &[f64], r: &mut qmc::Rng, out: &mut [f64]| {
        let z = [qmc::standard_normal(r)];
        let s = eicf_gradient_sample(&mo, &g, &inc, x, &z).unwrap_or(vec![0.0]);
        out.copy_from_slice(&s);
    };
    let cfg = OptimizerConfig {
        restarts: 6,
        max_iterations: 300,
        raw_samples: 64,
        ..sga_config(11)
    };
    let a = maximize_sga(sampler, value, toy.domain(), &cfg, &[]);
    let b = maximize_sga(sampler, value, toy.domain(), &cfg, &[]);
    assert_eq!(a, b);
    let lo = toy.domain().lower()[0];
    let width = toy.domain().upper()[0] - lo;
    let grid_best = (0..100_000)
        .map(|i| value(&[lo + width * i as f64 / 99_999.0]))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(a.value >= 0.98 * grid_best, "{} vs grid {grid_best}", a.value);
}

fn one_shot_instance() -> MoGpPosterior<f64> {
    let data = Dataset::from_records(vec![vec![0.2], vec![0.75]], vec![0.4, 0.1], 1e-3).unwrap();
    let k = Kernel::new(KernelFamily::SquaredExponential, vec![0.25], 1.0).unwrap();
    MoGpPosterior::from_single(&GpPosterior::new(k, MeanFunction::Zero, data).unwrap())
}

#[test]
fn one_shot_single_draw_matches_nested_grid() {
    let mo = one_shot_instance();
    let model = KgModel::new(&mo, vec![1.0]).unwrap();
    let os = OneShotKg {
        model,
        tag: 0,
        draws: vec![0.8],
        baseline: 0.0,
    };
    let mut scratch = [0.0; 2];
    let n = 201;
    let mut grid_best = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            let z = [i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64];
            grid_best = grid_best.max(os.value_grad(&z, &mut scratch));
        }
    }
    let dom = SearchDomain::unit(1);
    let m = maximize_one_shot(|z, g| os.value_grad(z, g), &dom, 1, &OptimizerConfig::default(), &[]).unwrap();
    assert!((m.value - grid_best).abs() <= 1e-3, "{} vs {grid_best}", m.value);
}

#[test]
fn mean_maximizer_starts_never_hurt() {
    let mo = one_shot_instance();
    let model = KgModel::new(&mo, vec![1.0]).unwrap();
    let draws = qmc::normal_draws(4, 0, 1, 6).row(0).to_vec();
    let m_count = draws.len();
    let os = OneShotKg {
        model,
        tag: 0,
        draws,
        baseline: 0.0,
    };
    let dom = SearchDomain::unit(1);
    let best_mean = (0..=100)
        .map(|i| vec![i as f64 / 100.0])
        .max_by(|a, b| mo.mean_at(a, 0).total_cmp(&mo.mean_at(b, 0)))
        .unwrap();
    let base = OptimizerConfig {
        restarts: 4,
        max_iterations: 30,
        seed: 2,
        ..OptimizerConfig::default()
    };
    let plain = maximize_one_shot(|z, g| os.value_grad(z, g), &dom, m_count, &base, &[]).unwrap();
    // One extra restart so the random starts stay the same.
    let seeded_cfg = OptimizerConfig { restarts: 5, ..base };
    for x in [0.1, 0.5, 0.9] {
        let mut start = vec![x];
        start.extend(std::iter::repeat(best_mean[0]).take(m_count));
        let seeded = maximize_one_shot(|z, g| os.value_grad(z, g), &dom, m_count, &seeded_cfg, &[start]).unwrap();
        assert!(seeded.value >= plain.value);
    }
}
