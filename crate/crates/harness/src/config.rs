//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use greybox_core::gp::KernelFamily;
use greybox_core::problems::{Problem, ProblemParams, Surface};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Random,
    EiBb,
    KgBb,
    EiCf,
    KgCf,
    MfKg,
    ConstituentKg,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Random,
        Method::EiBb,
        Method::KgBb,
        Method::EiCf,
        Method::KgCf,
        Method::MfKg,
        Method::ConstituentKg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::EiBb => "ei-bb",
            Method::KgBb => "kg-bb",
            Method::EiCf => "ei-cf",
            Method::KgCf => "kg-cf",
            Method::MfKg => "mf-kg",
            Method::ConstituentKg => "constituent-kg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Problem surface the method queries.
    pub fn surface(self) -> Surface {
        match self {
            Method::Random | Method::EiBb | Method::KgBb => Surface::Full,
            Method::EiCf | Method::KgCf => Surface::Inner,
            Method::MfKg => Surface::Fidelity,
            Method::ConstituentKg => Surface::Constituent,
        }
    }

    /// Whether regret also credits the posterior-mean recommendation.
    pub fn recommends(self) -> bool {
        matches!(
            self,
            Method::KgBb | Method::KgCf | Method::MfKg | Method::ConstituentKg
        )
    }

    pub fn is_tagged(self) -> bool {
        matches!(self, Method::MfKg | Method::ConstituentKg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetKind {
    Evaluations,
    Cost,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelNoise {
    /// Fixed zero noise on noiseless problems, learned otherwise.
    Auto,
    Learn,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KgStrategy {
    Discrete,
    OneShot,
    Sga,
}

impl KgStrategy {
    fn name(self) -> &'static str {
        match self {
            KgStrategy::Discrete => "discrete",
            KgStrategy::OneShot => "one-shot",
            KgStrategy::Sga => "sga",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostModelKind {
    Known,
    LogGp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub problem_params: ProblemParams,
    /// Variance of additive Gaussian observation noise.
    pub problem_noise: f64,
    pub method: Method,
    pub budget: f64,
    pub budget_kind: BudgetKind,
    pub replications: usize,
    pub seed: u64,
    pub kernel: KernelFamily,
    /// Refit hyperparameters every this many iterations.
    pub refit: usize,
    pub model_noise: ModelNoise,
    pub model_restarts: usize,
    pub samples: usize,
    pub rank_samples: usize,
    pub kg_strategy: KgStrategy,
    /// Scrambled Halton points added to the KG discretization; `None` picks
    /// a per-method default.
    pub discretization: Option<usize>,
    pub cost_normalize: bool,
    pub cost_model: CostModelKind,
    pub opt_restarts: usize,
    pub opt_max_iterations: usize,
    pub opt_raw_samples: usize,
    pub fantasy_restarts: usize,
    pub one_shot_cap: usize,
    pub output_dir: Option<PathBuf>,
    pub wall_clock: bool,
    pub design_size: Option<usize>,
}

impl RunConfig {
    /// Defaults for everything but the required keys.
    pub fn new(problem: &str, method: Method, budget: f64) -> Self {
        Self {
            problem: problem.to_string(),
            problem_params: ProblemParams::default(),
            problem_noise: 0.0,
            method,
            budget,
            budget_kind: BudgetKind::Evaluations,
            replications: 1,
            seed: 0,
            kernel: KernelFamily::Matern52,
            refit: 1,
            model_noise: ModelNoise::Auto,
            model_restarts: 8,
            samples: 128,
            rank_samples: 4096,
            kg_strategy: KgStrategy::Discrete,
            discretization: None,
            cost_normalize: false,
            cost_model: CostModelKind::Known,
            opt_restarts: 10,
            opt_max_iterations: 100,
            opt_raw_samples: 256,
            fantasy_restarts: 20,
            one_shot_cap: 20_000,
            output_dir: None,
            wall_clock: false,
            design_size: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// keys under `manifest.` are ignored so manifests parse as configs.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(HarnessError::config(
                    line,
                    format!("line {} is not `key = value`", lineno + 1),
                ));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(HarnessError::config("", format!("empty key on line {}", lineno + 1)));
            }
            if k.starts_with("manifest.") {
                continue;
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(HarnessError::config(k, "duplicate key"));
            }
        }
        Self::from_map(map)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<Self> {
        let mut take = |k: &str| map.remove(k);
        let required = |k: &str, v: Option<String>| v.ok_or_else(|| HarnessError::config(k, "missing required key"));

        let problem = required("problem.name", take("problem.name"))?;
        let method_s = required("method.name", take("method.name"))?;
        let method = Method::parse(&method_s)
            .ok_or_else(|| HarnessError::config("method.name", format!("unknown method `{method_s}`")))?;
        let budget: f64 = parse_num("budget", &required("budget", take("budget"))?)?;
        let mut c = RunConfig::new(&problem, method, budget);

        if let Some(v) = take("problem.d") {
            c.problem_params.d = Some(parse_num("problem.d", &v)?);
        }
        if let Some(v) = take("problem.k") {
            c.problem_params.k = Some(parse_num("problem.k", &v)?);
        }
        if let Some(v) = take("problem.seed") {
            c.problem_params.seed = Some(parse_num("problem.seed", &v)?);
        }
        if let Some(v) = take("problem.noise") {
            c.problem_noise = parse_num("problem.noise", &v)?;
        }
        if let Some(v) = take("budget.kind") {
            c.budget_kind = match v.as_str() {
                "evaluations" => BudgetKind::Evaluations,
                "cost" => BudgetKind::Cost,
                _ => return Err(HarnessError::config("budget.kind", "expected `evaluations` or `cost`")),
            };
        }
        if let Some(v) = take("replications") {
            c.replications = parse_num("replications", &v)?;
        }
        if let Some(v) = take("seed") {
            c.seed = parse_num("seed", &v)?;
        }
        if let Some(v) = take("model.kernel") {
            c.kernel = KernelFamily::parse(&v)
                .ok_or_else(|| HarnessError::config("model.kernel", format!("unknown kernel `{v}`")))?;
        }
        if let Some(v) = take("model.refit") {
            c.refit = parse_num("model.refit", &v)?;
        }
        if let Some(v) = take("model.noise") {
            c.model_noise = match v.as_str() {
                "auto" => ModelNoise::Auto,
                "learn" => ModelNoise::Learn,
                s => ModelNoise::Fixed(parse_num("model.noise", s)?),
            };
        }
        if let Some(v) = take("model.restarts") {
            c.model_restarts = parse_num("model.restarts", &v)?;
        }
        if let Some(v) = take("acq.samples") {
            c.samples = parse_num("acq.samples", &v)?;
        }
        if let Some(v) = take("acq.rank_samples") {
            c.rank_samples = parse_num("acq.rank_samples", &v)?;
        }
        if let Some(v) = take("acq.kg_strategy") {
            c.kg_strategy = match v.as_str() {
                "discrete" => KgStrategy::Discrete,
                "one-shot" => KgStrategy::OneShot,
                "sga" => KgStrategy::Sga,
                _ => {
                    return Err(HarnessError::config(
                        "acq.kg_strategy",
                        "expected `discrete`, `one-shot` or `sga`",
                    ))
                }
            };
        }
        if let Some(v) = take("acq.discretization") {
            c.discretization = match v.as_str() {
                "auto" => None,
                s => Some(parse_num("acq.discretization", s)?),
            };
        }
        if let Some(v) = take("acq.cost_normalize") {
            c.cost_normalize = parse_bool("acq.cost_normalize", &v)?;
        }
        if let Some(v) = take("acq.cost_model") {
            c.cost_model = match v.as_str() {
                "known" => CostModelKind::Known,
                "log-gp" => CostModelKind::LogGp,
                _ => return Err(HarnessError::config("acq.cost_model", "expected `known` or `log-gp`")),
            };
        }
        if let Some(v) = take("opt.restarts") {
            c.opt_restarts = parse_num("opt.restarts", &v)?;
        }
        if let Some(v) = take("opt.max_iterations") {
            c.opt_max_iterations = parse_num("opt.max_iterations", &v)?;
        }
        if let Some(v) = take("opt.raw_samples") {
            c.opt_raw_samples = parse_num("opt.raw_samples", &v)?;
        }
        if let Some(v) = take("opt.fantasy_restarts") {
            c.fantasy_restarts = parse_num("opt.fantasy_restarts", &v)?;
        }
        if let Some(v) = take("opt.one_shot_cap") {
            c.one_shot_cap = parse_num("opt.one_shot_cap", &v)?;
        }
        if let Some(v) = take("output.dir") {
            c.output_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = take("trace.wall_clock") {
            c.wall_clock = parse_bool("trace.wall_clock", &v)?;
        }
        if let Some(v) = take("design.size") {
            c.design_size = match v.as_str() {
                "auto" => None,
                s => Some(parse_num("design.size", s)?),
            };
        }
        if let Some(k) = map.keys().next() {
            return Err(HarnessError::config(k.as_str(), "unknown key"));
        }
        c.validate()?;
        Ok(c)
    }

    /// Checks value ranges and method/problem compatibility.
    pub fn validate(&self) -> Result<()> {
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(HarnessError::config("budget", "must be positive"));
        }
        if self.budget_kind == BudgetKind::Evaluations && self.budget.fract() != 0.0 {
            return Err(HarnessError::config("budget", "an evaluation budget must be an integer"));
        }
        if self.replications == 0 {
            return Err(HarnessError::config("replications", "must be at least 1"));
        }
        if !(self.problem_noise >= 0.0) || !self.problem_noise.is_finite() {
            return Err(HarnessError::config("problem.noise", "must be a finite nonnegative variance"));
        }
        if let ModelNoise::Fixed(v) = self.model_noise {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(HarnessError::config("model.noise", "must be `auto`, `learn` or a nonnegative variance"));
            }
        }
        for (key, v) in [
            ("model.refit", self.refit),
            ("model.restarts", self.model_restarts),
            ("acq.samples", self.samples),
            ("acq.rank_samples", self.rank_samples),
            ("opt.restarts", self.opt_restarts),
            ("opt.fantasy_restarts", self.fantasy_restarts),
            ("opt.one_shot_cap", self.one_shot_cap),
        ] {
            if v == 0 {
                return Err(HarnessError::config(key, "must be at least 1"));
            }
        }
        if self.method != Method::Random && self.design_size.is_some_and(|n| n < 2) {
            return Err(HarnessError::config("design.size", "model-based methods need at least 2 design points"));
        }
        self.check_problem_params()?;
        let problem = self.problem()?;
        let surface = self.method.surface();
        if !problem.has(surface) {
            return Err(HarnessError::config(
                "method.name",
                format!(
                    "method `{}` needs the {} surface, which problem `{}` lacks",
                    self.method.name(),
                    surface.name(),
                    self.problem
                ),
            ));
        }
        if self.method == Method::KgCf {
            let k = problem.outputs();
            let probe = greybox_core::linalg::Matrix::zeros(k, k);
            let closed_form = problem
                .outer()
                .is_some_and(|g| g.expected(&vec![0.0; k], &probe).is_some());
            if !closed_form {
                return Err(HarnessError::config(
                    "method.name",
                    "kg-cf needs an outer function with a closed-form expectation",
                ));
            }
        }
        if self.kg_strategy != KgStrategy::Discrete && self.method != Method::KgBb {
            return Err(HarnessError::config(
                "acq.kg_strategy",
                format!("`{}` is only available for kg-bb", self.kg_strategy.name()),
            ));
        }
        if self.method == Method::KgBb && self.kg_strategy == KgStrategy::OneShot {
            let dim = problem.dim() * (self.samples + 1);
            if dim > self.one_shot_cap {
                return Err(HarnessError::config(
                    "acq.samples",
                    format!("one-shot dimension {dim} exceeds opt.one_shot_cap; reduce the sample count"),
                ));
            }
        }
        if self.cost_model == CostModelKind::LogGp && !self.method.is_tagged() {
            return Err(HarnessError::config(
                "acq.cost_model",
                "a learned cost model applies only to mf-kg and constituent-kg",
            ));
        }
        Ok(())
    }

    fn check_problem_params(&self) -> Result<()> {
        let p = &self.problem_params;
        let (d_ok, k_ok, seed_ok): (Option<(usize, usize)>, Option<(usize, usize)>, bool) =
            match self.problem.as_str() {
                "square_scalar" | "queuing_mf" => (None, None, false),
                "calibration" => (Some((2, 6)), Some((2, 8)), true),
                "constituent_sum" => (None, Some((4, 100)), true),
                other => {
                    return Err(HarnessError::config(
                        "problem.name",
                        format!("unknown problem `{other}`"),
                    ))
                }
            };
        for (key, value, range) in [("problem.d", p.d, d_ok), ("problem.k", p.k, k_ok)] {
            match (value, range) {
                (Some(_), None) => {
                    return Err(HarnessError::config(key, format!("not a parameter of `{}`", self.problem)))
                }
                (Some(v), Some((lo, hi))) if v < lo || v > hi => {
                    return Err(HarnessError::config(key, format!("must lie in [{lo}, {hi}]")))
                }
                _ => {}
            }
        }
        if p.seed.is_some() && !seed_ok {
            return Err(HarnessError::config(
                "problem.seed",
                format!("not a parameter of `{}`", self.problem),
            ));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::by_name(&self.problem, &self.problem_params)
            .map_err(|e| HarnessError::config("problem.name", e.to_string()))
    }

    /// Number of initial design points for a problem of dimension `d`.
    pub fn design_points(&self, d: usize) -> usize {
        self.design_size.unwrap_or(2 * (d + 1))
    }

    /// Every key with its resolved value, in a fixed order. Parsing the
    /// output gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("problem.name", self.problem.clone());
        if let Some(d) = self.problem_params.d {
            kv("problem.d", d.to_string());
        }
        if let Some(k) = self.problem_params.k {
            kv("problem.k", k.to_string());
        }
        if let Some(seed) = self.problem_params.seed {
            kv("problem.seed", seed.to_string());
        }
        kv("problem.noise", self.problem_noise.to_string());
        kv("method.name", self.method.name().to_string());
        kv("budget", self.budget.to_string());
        kv(
            "budget.kind",
            match self.budget_kind {
                BudgetKind::Evaluations => "evaluations",
                BudgetKind::Cost => "cost",
            }
            .to_string(),
        );
        kv("replications", self.replications.to_string());
        kv("seed", self.seed.to_string());
        kv("model.kernel", self.kernel.name().to_string());
        kv("model.refit", self.refit.to_string());
        kv(
            "model.noise",
            match self.model_noise {
                ModelNoise::Auto => "auto".to_string(),
                ModelNoise::Learn => "learn".to_string(),
                ModelNoise::Fixed(v) => v.to_string(),
            },
        );
        kv("model.restarts", self.model_restarts.to_string());
        kv("acq.samples", self.samples.to_string());
        kv("acq.rank_samples", self.rank_samples.to_string());
        kv("acq.kg_strategy", self.kg_strategy.name().to_string());
        kv(
            "acq.discretization",
            self.discretization.map_or("auto".to_string(), |v| v.to_string()),
        );
        kv("acq.cost_normalize", self.cost_normalize.to_string());
        kv(
            "acq.cost_model",
            match self.cost_model {
                CostModelKind::Known => "known",
                CostModelKind::LogGp => "log-gp",
            }
            .to_string(),
        );
        kv("opt.restarts", self.opt_restarts.to_string());
        kv("opt.max_iterations", self.opt_max_iterations.to_string());
        kv("opt.raw_samples", self.opt_raw_samples.to_string());
        kv("opt.fantasy_restarts", self.fantasy_restarts.to_string());
        kv("opt.one_shot_cap", self.one_shot_cap.to_string());
        if let Some(dir) = &self.output_dir {
            kv("output.dir", dir.display().to_string());
        }
        kv("trace.wall_clock", self.wall_clock.to_string());
        kv(
            "design.size",
            self.design_size.map_or("auto".to_string(), |v| v.to_string()),
        );
        s
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| HarnessError::config(key, format!("cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(HarnessError::config(key, format!("expected `true` or `false`, got `{v}`"))),
    }
}
