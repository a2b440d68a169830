use rand::Rng;

use crate::problems::Problem;
use crate::qmc;
use crate::trace::Trace;

/// Uniform random search with full evaluations.
pub fn random_search(problem: &Problem, budget: usize, seed: u64) -> Trace {
    random_search_replication(problem, budget, seed, 0)
}

pub fn random_search_replication(problem: &Problem, budget: usize, seed: u64, replication: usize) -> Trace {
    let mut r = qmc::rng(seed, 0);
    let dom = problem.domain();
    let mut trace = Trace::new();
    for _ in 0..budget {
        let x: Vec<f64> = dom
            .lower()
            .iter()
            .zip(dom.upper())
            .map(|(l, u)| l + r.random::<f64>() * (u - l))
            .collect();
        let y = problem.full(&x);
        let cost = problem.cost(&x, None);
        trace.record(replication, x, None, y, Some(y), problem.optimum(), cost, None, None);
    }
    trace
}
