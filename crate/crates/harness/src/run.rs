//! Seeded Bayesian-optimization loops for every method.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use greybox_core::acquisition::{
    ei_value_grad, eicf_value, eicf_value_grad, CompositeKg, CostFunction, CostModel, DiscreteKg,
    Incumbent, KgModel, OneShotKg, OuterFunction, TaggedKg,
};
use greybox_core::gp::{
    fit_with_options, Dataset, FitOptions, GpPosterior, Kernel, MeanFunction, MeanOption,
    NoiseOption,
};
use greybox_core::linalg::JitterPolicy;
use greybox_core::multioutput::{fit_multioutput, MoGpPosterior, MultiOutputModel, TaggedDataset};
use greybox_core::optimize::{
    maximize_deterministic, maximize_local, maximize_one_shot, maximize_sga, LocalSettings,
    OptimizerConfig, StepRule,
};
use greybox_core::problems::{random_search_replication, Problem};
use greybox_core::qmc::{self, ScrambledHalton};
use greybox_core::{Domain, Trace};

use crate::config::{BudgetKind, CostModelKind, KgStrategy, Method, ModelNoise, RunConfig};
use crate::error::{HarnessError, Result};
use crate::io::{self, ReplicationRecord, RunManifest};

const STREAM_NOISE: u64 = 1 << 40;
const STREAM_ACQ: u64 = 2 << 40;
const STREAM_RANK: u64 = 3 << 40;
const FD_STEP: f64 = 1e-5;

/// Traces (`None` for failed replications) and the manifest of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub traces: Vec<Option<Trace>>,
    pub manifest: RunManifest,
}

/// Thread cap from `GREYBOX_BO_THREADS`; 0 or unset means automatic.
pub fn thread_count() -> Result<usize> {
    match std::env::var("GREYBOX_BO_THREADS") {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HarnessError::config("GREYBOX_BO_THREADS", format!("cannot parse `{v}`"))),
    }
}

/// SHA-256 of the full objective at 16 fixed scrambled Halton points.
pub fn oracle_checksum(problem: &Problem) -> String {
    let dom = problem.domain();
    let mut h = Sha256::new();
    for x in qmc::design(dom.lower(), dom.upper(), 16, 0) {
        for v in &x {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(problem.full(&x).to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Runs every replication. Failed replications are reported in the
/// manifest rather than aborting the run.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let problem = config.problem()?;
    let threads = thread_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let results: Vec<(Option<Trace>, ReplicationRecord)> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| {
                let seed = config.seed.wrapping_add(r as u64);
                let (outcome, hyper) = run_replication(config, &problem, r);
                match outcome {
                    Ok(trace) => (
                        Some(trace),
                        ReplicationRecord {
                            replication: r,
                            seed,
                            failure: None,
                            final_hyper: hyper,
                        },
                    ),
                    Err(e) => {
                        log::error!("replication {r} failed: {e}");
                        (
                            None,
                            ReplicationRecord {
                                replication: r,
                                seed,
                                failure: Some(e.to_string()),
                                final_hyper: hyper,
                            },
                        )
                    }
                }
            })
            .collect()
    });
    let (traces, records): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(RunOutput {
        traces,
        manifest: RunManifest {
            config: config.to_text(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            design_size: config.design_points(problem.dim()),
            oracle_checksum: oracle_checksum(&problem),
            replications: records,
        },
    })
}

/// [`run`], then writes `trace-rNNN.csv` files and `manifest.txt` to `dir`.
pub fn run_to_dir(config: &RunConfig, dir: &Path) -> Result<RunOutput> {
    let out = run(config)?;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (r, t) in out.traces.iter().enumerate() {
        if let Some(t) = t {
            io::write_trace(&dir.join(io::trace_file_name(r)), t)?;
        }
    }
    let path = io::manifest_path(dir);
    std::fs::write(&path, out.manifest.to_text()).map_err(|e| HarnessError::io(&path, e))?;
    Ok(out)
}

/// One replication: its trace, or the error that stopped it, plus the last
/// fitted hyperparameters.
pub fn run_replication(config: &RunConfig, problem: &Problem, r: usize) -> (Result<Trace>, Vec<f64>) {
    let seed = config.seed.wrapping_add(r as u64);
    if config.method == Method::Random {
        let full_cost = problem.cost(problem.argmax(), None);
        let n = match config.budget_kind {
            BudgetKind::Evaluations => config.budget as usize,
            BudgetKind::Cost => ((config.budget / full_cost).ceil() as usize).max(1),
        };
        return (Ok(random_search_replication(problem, n, seed, r)), Vec::new());
    }
    let mut rep = Replication::new(config, problem, r, seed);
    let res = rep.execute();
    let hyper = rep.hyper_snapshot();
    (res.map(|_| rep.trace), hyper)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Query {
    Full,
    Inner,
    Tag(usize),
}

#[derive(Clone, Debug)]
struct Observation {
    u: Vec<f64>,
    query: Query,
    ys: Vec<f64>,
    cost: f64,
}

#[derive(Clone, Debug)]
enum Hyper {
    Single {
        kernel: Kernel<f64>,
        mean: MeanFunction<f64>,
        noise: f64,
    },
    Multi {
        model: MultiOutputModel<f64>,
        noise: Vec<f64>,
    },
}

enum Posterior {
    Single(GpPosterior<f64>),
    Multi(MoGpPosterior<f64>),
}

impl Posterior {
    fn multi(&self) -> MoGpPosterior<f64> {
        match self {
            Posterior::Single(gp) => MoGpPosterior::from_single(gp),
            Posterior::Multi(mo) => mo.clone(),
        }
    }
}

struct Choice {
    u: Vec<f64>,
    query: Query,
    value: f64,
}

struct ProblemCost {
    problem: Problem,
}

impl CostFunction for ProblemCost {
    fn cost(&self, u: &[f64], tag: usize) -> f64 {
        self.problem.cost(&self.problem.domain().from_unit(u), Some(tag))
    }
}

struct Replication<'a> {
    cfg: &'a RunConfig,
    problem: &'a Problem,
    index: usize,
    seed: u64,
    unit: Domain,
    obs: Vec<Observation>,
    trace: Trace,
    hyper: Option<Hyper>,
    warm: Vec<Vec<f64>>,
    fits: usize,
    started: Instant,
}

impl<'a> Replication<'a> {
    fn new(cfg: &'a RunConfig, problem: &'a Problem, index: usize, seed: u64) -> Self {
        Self {
            cfg,
            problem,
            index,
            seed,
            unit: Domain::unit(problem.dim()),
            obs: Vec::new(),
            trace: Trace::new(),
            hyper: None,
            warm: Vec::new(),
            fits: 0,
            started: Instant::now(),
        }
    }

    fn has_budget(&self) -> bool {
        match self.cfg.budget_kind {
            BudgetKind::Evaluations => self.trace.len() < self.cfg.budget as usize,
            BudgetKind::Cost => self.trace.total_cost() < self.cfg.budget * (1.0 - 1e-12),
        }
    }

    fn iteration_seed(&self, iteration: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(iteration as u64 + 1)
    }

    fn execute(&mut self) -> Result<()> {
        let d = self.problem.dim();
        let k = self.problem.outputs();
        let n0 = self.cfg.design_points(d);
        let design = qmc::design(&vec![0.0; d], &vec![1.0; d], n0, self.seed);
        for (i, u) in design.into_iter().enumerate() {
            if !self.has_budget() {
                break;
            }
            let query = match self.cfg.method {
                Method::EiCf | Method::KgCf => Query::Inner,
                Method::MfKg => Query::Tag(self.problem.target_tag().expect("fidelity problem")),
                Method::ConstituentKg => Query::Tag(i % k),
                _ => Query::Full,
            };
            self.evaluate(u, query, None);
        }
        let mut iteration = 0;
        while self.has_budget() {
            let post = self.posterior(iteration)?;
            if self.cfg.method.recommends() {
                self.credit_recommendation(&post, iteration)?;
            }
            let choice = self.choose(&post, iteration)?;
            self.evaluate(choice.u, choice.query, Some(choice.value));
            iteration += 1;
        }
        if self.cfg.method.recommends() && self.obs.len() >= 2 {
            let post = self.posterior(iteration)?;
            self.credit_recommendation(&post, iteration)?;
        }
        Ok(())
    }

    fn evaluate(&mut self, u: Vec<f64>, query: Query, acq: Option<f64>) {
        let p = self.problem;
        let x = p.domain().from_unit(&u);
        let (truth, candidate, tag) = match query {
            Query::Full => {
                let f = p.full(&x);
                (vec![f], Some(f), None)
            }
            Query::Inner => (p.inner(&x).expect("inner surface"), Some(p.full(&x)), None),
            Query::Tag(j) => {
                let v = p.tagged(&x, j).expect("tagged surface");
                let cand = (p.target_tag() == Some(j)).then_some(v);
                (vec![v], cand, Some(j))
            }
        };
        let ys: Vec<f64> = if self.cfg.problem_noise > 0.0 {
            let z = qmc::normal_draws(self.seed, STREAM_NOISE + self.obs.len() as u64, 1, truth.len());
            let s = self.cfg.problem_noise.sqrt();
            truth.iter().enumerate().map(|(j, t)| t + s * z[(0, j)]).collect()
        } else {
            truth
        };
        let y = match (query, p.outer()) {
            (Query::Inner, Some(g)) => g.eval(&ys),
            _ => ys[0],
        };
        let cost = p.cost(&x, tag);
        let wall = self
            .cfg
            .wall_clock
            .then(|| self.started.elapsed().as_secs_f64() * 1e3);
        self.trace.record(
            self.index,
            x,
            tag,
            y,
            candidate,
            p.optimum(),
            cost,
            acq,
            wall,
        );
        self.obs.push(Observation { u, query, ys, cost });
    }

    fn noise_option(&self) -> NoiseOption {
        match self.cfg.model_noise {
            ModelNoise::Auto if self.cfg.problem_noise == 0.0 => NoiseOption::Fixed(0.0),
            ModelNoise::Auto | ModelNoise::Learn => NoiseOption::Learn,
            ModelNoise::Fixed(v) => NoiseOption::Fixed(v),
        }
    }

    fn fit_options(&self, warm: Option<Vec<f64>>, attempt: usize) -> FitOptions {
        let first = self.fits == 0 || warm.is_none();
        FitOptions {
            noise: self.noise_option(),
            mean: MeanOption::Constant,
            restarts: if first || attempt > 0 {
                self.cfg.model_restarts + 4 * attempt
            } else {
                1
            },
            seed: self.seed.wrapping_add(1_000 * (self.fits as u64 + 1) + attempt as u64),
            max_iterations: 200,
            warm_start: if attempt == 0 { warm } else { None },
        }
    }

    /// Fits (or reuses) hyperparameters, then conditions on all data.
    /// A failed attempt is retried with more restarts and a larger jitter.
    fn posterior(&mut self, iteration: usize) -> Result<Posterior> {
        let refit = self.hyper.is_none() || iteration % self.cfg.refit == 0;
        let mut last_err = None;
        for attempt in 0..2 {
            if refit {
                match self.fit(attempt) {
                    Ok(()) => {}
                    Err(e) => {
                        last_err = Some(e);
                        continue;
                    }
                }
            }
            let policy = if attempt == 0 {
                JitterPolicy::default()
            } else {
                JitterPolicy {
                    initial: 1e-6,
                    max: 1e-2,
                }
            };
            match self.condition(policy) {
                Ok(p) => {
                    self.fits += usize::from(refit);
                    return Ok(p);
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(HarnessError::Runtime(format!(
            "model fit failed after jitter escalation: {}",
            last_err.map_or_else(String::new, |e| e.to_string())
        )))
    }

    fn single_data(&self) -> Result<Dataset<f64>> {
        let xs = self.obs.iter().map(|o| o.u.clone()).collect();
        let ys = self.obs.iter().map(|o| o.ys[0]).collect();
        Ok(Dataset::from_records(xs, ys, 0.0)?)
    }

    fn output_data(&self, j: usize) -> Result<Dataset<f64>> {
        let xs = self.obs.iter().map(|o| o.u.clone()).collect();
        let ys = self.obs.iter().map(|o| o.ys[j]).collect();
        Ok(Dataset::from_records(xs, ys, 0.0)?)
    }

    fn tagged_data(&self, noise: Vec<f64>) -> Result<TaggedDataset<f64>> {
        let mut data = TaggedDataset::new(noise)?;
        for o in &self.obs {
            match o.query {
                Query::Tag(j) => data.push(o.u.clone(), j, o.ys[0], o.cost)?,
                Query::Inner => data.push_all(&o.u, &o.ys, o.cost)?,
                Query::Full => data.push(o.u.clone(), 0, o.ys[0], o.cost)?,
            }
        }
        Ok(data)
    }

    fn template(&self) -> Result<MultiOutputModel<f64>> {
        let d = self.problem.dim();
        let k = self.problem.outputs();
        let fam = self.cfg.kernel;
        Ok(match self.cfg.method {
            Method::MfKg => MultiOutputModel::latent_factor(
                Kernel::isotropic(fam, d, 0.5)?,
                MeanFunction::Constant(0.0),
                (0..k - 1)
                    .map(|_| Kernel::isotropic(fam, d, 0.5))
                    .collect::<greybox_core::Result<_>>()?,
                vec![MeanFunction::Zero; k - 1],
            )?,
            _ => {
                let locations = (0..k)
                    .map(|j| self.problem.tag_location(j).expect("constituent location"))
                    .collect();
                MultiOutputModel::augmented(
                    Kernel::isotropic(fam, d + 1, 0.5)?,
                    locations,
                    MeanFunction::Constant(0.0),
                )?
            }
        })
    }

    fn fit(&mut self, attempt: usize) -> Result<()> {
        let fam = self.cfg.kernel;
        match self.cfg.method {
            Method::EiBb | Method::KgBb => {
                let data = self.single_data()?;
                let opts = self.fit_options(self.warm.first().cloned(), attempt);
                let fit = fit_with_options(&data, fam, &opts)?;
                self.warm = vec![fit.theta];
                self.hyper = Some(Hyper::Single {
                    kernel: fit.kernel,
                    mean: fit.mean,
                    noise: fit.noise_variance,
                });
            }
            Method::EiCf | Method::KgCf => {
                // Independent outputs are fitted one at a time.
                let k = self.problem.outputs();
                let mut kernels = Vec::with_capacity(k);
                let mut means = Vec::with_capacity(k);
                let mut noise = Vec::with_capacity(k);
                let mut warm = Vec::with_capacity(k);
                for j in 0..k {
                    let data = self.output_data(j)?;
                    let opts = self.fit_options(self.warm.get(j).cloned(), attempt);
                    let fit = fit_with_options(&data, fam, &opts)?;
                    kernels.push(fit.kernel);
                    means.push(fit.mean);
                    noise.push(fit.noise_variance);
                    warm.push(fit.theta);
                }
                self.warm = warm;
                self.hyper = Some(Hyper::Multi {
                    model: MultiOutputModel::independent(kernels, means)?,
                    noise,
                });
            }
            Method::MfKg | Method::ConstituentKg => {
                let template = self.template()?;
                let data = self.tagged_data(vec![0.0; template.outputs()])?;
                let opts = self.fit_options(self.warm.first().cloned(), attempt);
                let fit = fit_multioutput(&template, &data, &opts)?;
                self.warm = vec![fit.theta];
                self.hyper = Some(Hyper::Multi {
                    model: fit.model,
                    noise: fit.noise,
                });
            }
            Method::Random => unreachable!("random search fits no model"),
        }
        Ok(())
    }

    fn condition(&self, policy: JitterPolicy) -> Result<Posterior> {
        match self.hyper.as_ref().expect("fitted") {
            Hyper::Single {
                kernel,
                mean,
                noise,
            } => {
                let data = self.single_data()?.with_noise_variance(*noise);
                Ok(Posterior::Single(GpPosterior::with_jitter_policy(
                    kernel.clone(),
                    *mean,
                    data,
                    policy,
                )?))
            }
            Hyper::Multi { model, noise } => {
                let data = self.tagged_data(noise.clone())?;
                Ok(Posterior::Multi(MoGpPosterior::with_jitter_policy(
                    model.clone(),
                    data,
                    policy,
                )?))
            }
        }
    }

    fn hyper_snapshot(&self) -> Vec<f64> {
        match &self.hyper {
            None => Vec::new(),
            Some(Hyper::Single { kernel, noise, .. }) => {
                let mut v = kernel.log_hyper();
                v.push(*noise);
                v
            }
            Some(Hyper::Multi { model, noise }) => {
                let mut v = model.log_hyper();
                v.extend(noise);
                v
            }
        }
    }

    fn optimizer(&self, iteration: usize) -> OptimizerConfig {
        OptimizerConfig {
            restarts: self.cfg.opt_restarts,
            max_iterations: self.cfg.opt_max_iterations,
            raw_samples: self.cfg.opt_raw_samples,
            seed: self.iteration_seed(iteration),
            one_shot_cap: self.cfg.one_shot_cap,
            ..OptimizerConfig::default()
        }
    }

    /// Distinct evaluated points followed by scrambled Halton points.
    fn discretization(&self, iteration: usize) -> Vec<Vec<f64>> {
        let d = self.problem.dim();
        let count = self.cfg.discretization.unwrap_or(match self.cfg.method {
            Method::KgCf => 10 * d,
            _ => 100 * d,
        });
        let mut pts: Vec<Vec<f64>> = Vec::new();
        for o in &self.obs {
            if !pts.contains(&o.u) {
                pts.push(o.u.clone());
            }
        }
        if count > 0 {
            let h = ScrambledHalton::new(d, self.iteration_seed(iteration) ^ 0x5eed);
            pts.extend(h.points(count));
        }
        pts
    }

    fn evaluated_points(&self) -> Vec<Vec<f64>> {
        self.obs.iter().map(|o| o.u.clone()).collect()
    }

    /// Credits the true objective at the maximizer of the posterior mean of
    /// the objective to the last trace row.
    fn credit_recommendation(&mut self, post: &Posterior, iteration: usize) -> Result<()> {
        let rec = self.recommend(post, iteration)?;
        let value = self.problem.full(&self.problem.domain().from_unit(&rec));
        let optimum = self.problem.optimum();
        if let Some(row) = self.trace.rows.last_mut() {
            if value > row.best_so_far {
                row.best_so_far = value;
                row.regret = (optimum - value).max(0.0);
            }
        }
        Ok(())
    }

    fn recommend(&self, post: &Posterior, iteration: usize) -> Result<Vec<f64>> {
        let points = self.discretization(iteration);
        if self.cfg.method == Method::KgCf {
            let mo = post.multi();
            let g = self.problem.outer().expect("composite problem");
            let mut best = (f64::NEG_INFINITY, points[0].clone());
            for u in &points {
                let (m, c) = mo.mean_cov(u);
                let v = g.expected(&m, &c).unwrap_or(f64::NEG_INFINITY);
                if v > best.0 {
                    best = (v, u.clone());
                }
            }
            return Ok(best.1);
        }
        let mo = post.multi();
        let model = self.objective_model(&mo)?;
        let mut scored: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, u)| (model.target(u).mean, i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let extra: Vec<Vec<f64>> = scored.iter().take(3).map(|&(_, i)| points[i].clone()).collect();
        let cfg = OptimizerConfig {
            restarts: extra.len(),
            raw_samples: 0,
            ..self.optimizer(iteration)
        };
        Ok(model.max_mean(&self.unit, &cfg, &extra).x)
    }

    fn objective_model<'p>(&self, mo: &'p MoGpPosterior<f64>) -> Result<KgModel<'p>> {
        let p = match self.cfg.method {
            Method::MfKg | Method::ConstituentKg => {
                self.problem.functional_weights().expect("functional objective")
            }
            _ => vec![1.0],
        };
        Ok(KgModel::new(mo, p)?)
    }

    fn incumbent_extra(&self) -> Vec<Vec<f64>> {
        let best = self
            .trace
            .rows
            .iter()
            .zip(&self.obs)
            .filter(|(r, _)| r.y.is_finite())
            .max_by(|a, b| a.0.y.total_cmp(&b.0.y))
            .map(|(_, o)| o.u.clone());
        best.into_iter().collect()
    }

    fn choose(&self, post: &Posterior, iteration: usize) -> Result<Choice> {
        let ocfg = self.optimizer(iteration);
        match self.cfg.method {
            Method::EiBb => {
                let Posterior::Single(gp) = post else { unreachable!() };
                let inc = Incumbent::for_posterior(gp)?;
                let m = maximize_deterministic(
                    |u: &[f64], g: &mut [f64]| {
                        let (v, grad) = ei_value_grad(gp, &inc, u);
                        match grad {
                            Some(grad) => g.copy_from_slice(&grad),
                            None => g.iter_mut().for_each(|v| *v = 0.0),
                        }
                        v
                    },
                    &self.unit,
                    &ocfg,
                    &[inc.x.clone()],
                );
                Ok(Choice {
                    u: m.x,
                    query: Query::Full,
                    value: m.value,
                })
            }
            Method::KgBb => self.choose_kg_bb(post, iteration, &ocfg),
            Method::EiCf => self.choose_ei_cf(post, iteration, &ocfg),
            Method::KgCf => self.choose_kg_cf(post, iteration, &ocfg),
            Method::MfKg | Method::ConstituentKg => self.choose_tagged(post, iteration, &ocfg),
            Method::Random => unreachable!("random search has no acquisition"),
        }
    }

    fn choose_kg_bb(&self, post: &Posterior, iteration: usize, ocfg: &OptimizerConfig) -> Result<Choice> {
        let mo = post.multi();
        let model = KgModel::new(&mo, vec![1.0])?;
        let points = self.discretization(iteration);
        let extra = self.incumbent_extra();
        let m = match self.cfg.kg_strategy {
            KgStrategy::Discrete => {
                let kg = DiscreteKg::new(model, &points, true)?;
                maximize_deterministic(
                    |u: &[f64], g: &mut [f64]| kg.value_grad(u, 0, g),
                    &self.unit,
                    ocfg,
                    &extra,
                )
            }
            KgStrategy::Sga => {
                let kg = DiscreteKg::new(model, &points, true)?;
                let cfg = OptimizerConfig {
                    step_rule: StepRule::Sga { a: None, b: 1.0 },
                    ..ocfg.clone()
                };
                maximize_sga(
                    |u: &[f64], rng: &mut qmc::Rng, g: &mut [f64]| {
                        kg.gradient_sample(u, 0, qmc::standard_normal(rng), g)
                    },
                    |u: &[f64]| kg.value(u, 0),
                    &self.unit,
                    &cfg,
                    &extra,
                )
            }
            KgStrategy::OneShot => {
                let count = self.cfg.samples;
                let draws = qmc::normal_draws(self.seed, STREAM_ACQ + iteration as u64, count, 1);
                let rec = model.max_mean(
                    &self.unit,
                    &OptimizerConfig {
                        restarts: 3,
                        ..ocfg.clone()
                    },
                    &extra,
                );
                let os = OneShotKg {
                    model,
                    tag: 0,
                    draws: draws.as_slice().to_vec(),
                    baseline: rec.value,
                };
                let d = self.problem.dim();
                let starts: Vec<Vec<f64>> = ScrambledHalton::new(d, ocfg.seed)
                    .points(self.cfg.fantasy_restarts)
                    .into_iter()
                    .map(|u| {
                        let mut joint = u;
                        for _ in 0..count {
                            joint.extend_from_slice(&rec.x);
                        }
                        joint
                    })
                    .collect();
                let cfg = OptimizerConfig {
                    restarts: self.cfg.fantasy_restarts,
                    raw_samples: 0,
                    ..ocfg.clone()
                };
                maximize_one_shot(
                    |z: &[f64], g: &mut [f64]| os.value_grad(z, g),
                    &self.unit,
                    count,
                    &cfg,
                    &starts,
                )?
            }
        };
        Ok(Choice {
            u: m.x,
            query: Query::Full,
            value: m.value,
        })
    }

    fn composite_incumbent(&self, mo: &MoGpPosterior<f64>, g: &OuterFunction) -> Result<Incumbent> {
        let xs = self.evaluated_points();
        let values: Vec<f64> = if self.cfg.problem_noise > 0.0 {
            xs.iter().map(|u| g.eval(&mo.mean(u))).collect()
        } else {
            self.obs.iter().map(|o| g.eval(&o.ys)).collect()
        };
        Ok(Incumbent::best_observed(&xs, &values)?)
    }

    fn choose_ei_cf(&self, post: &Posterior, iteration: usize, ocfg: &OptimizerConfig) -> Result<Choice> {
        let Posterior::Multi(mo) = post else { unreachable!() };
        let g = self.problem.outer().expect("composite problem");
        let k = self.problem.outputs();
        let inc = self.composite_incumbent(mo, g)?;
        let draws = qmc::normal_draws(self.seed, STREAM_ACQ + iteration as u64, self.cfg.samples, k);
        let m = maximize_deterministic(
            |u: &[f64], grad: &mut [f64]| match eicf_value_grad(mo, g, &inc, u, &draws) {
                Ok((v, gv)) => {
                    grad.copy_from_slice(&gv);
                    v
                }
                Err(_) => {
                    grad.iter_mut().for_each(|v| *v = 0.0);
                    f64::NEG_INFINITY
                }
            },
            &self.unit,
            ocfg,
            &[inc.x.clone()],
        );
        // Re-rank the restart results with a larger common sample.
        let rank = qmc::normal_draws(self.seed, STREAM_RANK + iteration as u64, self.cfg.rank_samples, k);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for u in &m.restart_points {
            let v = eicf_value(mo, g, &inc, u, &rank).unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, u.clone()));
            }
        }
        let (value, u) = best.expect("at least one restart");
        Ok(Choice {
            u,
            query: Query::Inner,
            value,
        })
    }

    fn choose_kg_cf(&self, post: &Posterior, iteration: usize, ocfg: &OptimizerConfig) -> Result<Choice> {
        let Posterior::Multi(mo) = post else { unreachable!() };
        let g = self.problem.outer().expect("composite problem");
        let k = self.problem.outputs();
        let draws = qmc::normal_draws(self.seed, STREAM_ACQ + iteration as u64, self.cfg.samples, k);
        let points = self.discretization(iteration);
        let kg = CompositeKg::new(mo, g.clone(), &points, draws)?;
        let m = maximize_deterministic(
            |u: &[f64], grad: &mut [f64]| {
                let v = kg.value(u);
                central_difference(|z| kg.value(z), u, grad);
                v
            },
            &self.unit,
            ocfg,
            &self.incumbent_extra(),
        );
        Ok(Choice {
            u: m.x,
            query: Query::Inner,
            value: m.value,
        })
    }

    fn cost_model(&self) -> Result<Option<CostModel>> {
        let wanted = self.cfg.method == Method::MfKg || self.cfg.cost_normalize;
        if !wanted {
            return Ok(None);
        }
        Ok(Some(match self.cfg.cost_model {
            CostModelKind::Known => CostModel::known(ProblemCost {
                problem: self.problem.clone(),
            }),
            CostModelKind::LogGp => {
                let k = self.problem.outputs();
                let records: Vec<(Vec<f64>, usize, f64)> = self
                    .obs
                    .iter()
                    .filter_map(|o| match o.query {
                        Query::Tag(j) => Some((o.u.clone(), j, o.cost)),
                        _ => None,
                    })
                    .collect();
                let locations = (0..k)
                    .map(|j| self.problem.tag_location(j).expect("tag location"))
                    .collect();
                CostModel::fit_log_gp(&records, locations, self.cfg.kernel, self.seed)?
            }
        }))
    }

    fn choose_tagged(&self, post: &Posterior, iteration: usize, ocfg: &OptimizerConfig) -> Result<Choice> {
        let Posterior::Multi(mo) = post else { unreachable!() };
        let model = self.objective_model(mo)?;
        let points = self.discretization(iteration);
        let kg = DiscreteKg::new(model, &points, true)?;
        let cost = self.cost_model()?;
        let accs: Vec<TaggedKg> = (0..self.problem.outputs())
            .map(|tag| TaggedKg {
                kg: kg.clone(),
                tag,
                cost: cost.clone(),
            })
            .collect();
        let (u, tag, value) = maximize_tagged(&accs, &self.unit, ocfg, &self.incumbent_extra());
        Ok(Choice {
            u,
            query: Query::Tag(tag),
            value,
        })
    }
}

/// Screens (point, tag) pairs on a scrambled Halton set, `raw_samples` pairs
/// in all, and runs local searches from the best `restarts` pairs.
fn maximize_tagged(
    accs: &[TaggedKg<'_>],
    unit: &Domain,
    cfg: &OptimizerConfig,
    extra: &[Vec<f64>],
) -> (Vec<f64>, usize, f64) {
    let d = unit.dim();
    let mut pool: Vec<Vec<f64>> = extra.to_vec();
    let per_tag = (cfg.raw_samples / accs.len()).max(cfg.restarts);
    pool.extend(ScrambledHalton::new(d, cfg.seed).points(per_tag));
    let mut scored: Vec<(f64, usize, usize)> = Vec::with_capacity(pool.len() * accs.len());
    for (tag, acc) in accs.iter().enumerate() {
        for (i, u) in pool.iter().enumerate() {
            let v = acc.value(u).unwrap_or(f64::NEG_INFINITY);
            scored.push((if v.is_nan() { f64::NEG_INFINITY } else { v }, tag, i));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let settings = LocalSettings {
        max_iterations: cfg.max_iterations,
        gradient_tolerance: cfg.gradient_tolerance,
        ..LocalSettings::default()
    };
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    for &(_, tag, i) in scored.iter().take(cfg.restarts) {
        let acc = &accs[tag];
        let out = maximize_local(|u: &[f64], g: &mut [f64]| acc.value_grad(u, g), &pool[i], unit, &settings);
        let v = if out.value.is_nan() { f64::NEG_INFINITY } else { out.value };
        if best.as_ref().map_or(true, |(bv, _, _)| v > *bv) {
            best = Some((v, out.x, tag));
        }
    }
    let (v, u, tag) = best.expect("at least one restart");
    (u, tag, v)
}

/// Central differences kept inside the unit box (one-sided at the faces).
fn central_difference(f: impl Fn(&[f64]) -> f64, u: &[f64], grad: &mut [f64]) {
    let mut z = u.to_vec();
    for i in 0..u.len() {
        let hi = (u[i] + FD_STEP).min(1.0);
        let lo = (u[i] - FD_STEP).max(0.0);
        z[i] = hi;
        let fh = f(&z);
        z[i] = lo;
        let fl = f(&z);
        z[i] = u[i];
        grad[i] = if hi > lo { (fh - fl) / (hi - lo) } else { 0.0 };
    }
}

