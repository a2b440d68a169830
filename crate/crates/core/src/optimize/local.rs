//! Projected limited-memory quasi-Newton ascent on a box.

use std::collections::VecDeque;

use crate::gp::SearchDomain;
use crate::linalg::dot;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSettings {
    pub max_iterations: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub gradient_tolerance: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LocalSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-6,
            memory: 10,
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LocalOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub start_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

/// Maximizes `f` from `x0` over `domain`.
///
/// `f(x, grad)` returns the value and writes the gradient. Iterates stay
/// feasible and the value is nondecreasing, so the result is never worse
/// than the (projected) start. A non-finite value at a trial point is
/// treated as a failed step.
pub fn maximize_local<F>(
    mut f: F,
    x0: &[f64],
    domain: &SearchDomain<f64>,
    settings: &LocalSettings,
) -> LocalOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    domain.project(&mut x);
    // Internally minimize phi = -f.
    let mut g = vec![0.0; n];
    let mut phi = -f(&x, &mut g);
    g.iter_mut().for_each(|v| *v = -*v);
    let mut evaluations = 1;
    let start_value = -phi;
    let mut out = LocalOutcome {
        x: x.clone(),
        value: start_value,
        start_value,
        iterations: 0,
        evaluations,
        converged: false,
        line_search_failed: false,
    };
    if !phi.is_finite() || g.iter().any(|v| !v.is_finite()) {
        out.line_search_failed = true;
        return out;
    }
    let lower = domain.lower();
    let upper = domain.upper();
    let width = (0..n).map(|i| upper[i] - lower[i]).fold(0.0, f64::max);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut g_new = vec![0.0; n];

    for it in 0..settings.max_iterations {
        out.iterations = it;
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
            .collect();
        let pg: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { g[i] }).collect();
        let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pg_norm <= settings.gradient_tolerance {
            out.converged = true;
            break;
        }

        let mut used_qn = !pairs.is_empty();
        let mut dir = if used_qn {
            two_loop(&pg, &pairs)
        } else {
            let step = 0.1 * width / pg_norm;
            pg.iter().map(|v| -v * step).collect()
        };
        for i in 0..n {
            if active[i] {
                dir[i] = 0.0;
            }
        }
        if dot(&dir, &pg) >= 0.0 {
            pairs.clear();
            used_qn = false;
            let step = 0.1 * width / pg_norm;
            dir = pg.iter().map(|v| -v * step).collect();
        }

        let mut accepted = None;
        loop {
            let mut alpha = 1.0;
            for _ in 0..settings.max_backtracks {
                let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
                domain.project(&mut trial);
                let dx: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let slope = dot(&g, &dx);
                if dx.iter().all(|v| *v == 0.0) || slope >= 0.0 {
                    alpha *= 0.5;
                    continue;
                }
                let val = -f(&trial, &mut g_new);
                evaluations += 1;
                if val.is_finite()
                    && g_new.iter().all(|v| v.is_finite())
                    && val <= phi + settings.armijo * slope
                {
                    g_new.iter_mut().for_each(|v| *v = -*v);
                    accepted = Some((trial, val));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || !used_qn {
                break;
            }
            // Quasi-Newton direction failed: retry once along steepest descent.
            pairs.clear();
            used_qn = false;
            let step = 0.1 * width / pg_norm;
            dir = pg.iter().map(|v| -v * step).collect();
        }

        let Some((x_new, phi_new)) = accepted else {
            out.line_search_failed = true;
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == settings.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let decrease = phi - phi_new;
        x = x_new;
        phi = phi_new;
        g.copy_from_slice(&g_new);
        if decrease <= 1e-15 * (1.0 + phi.abs()) {
            out.converged = true;
            out.iterations = it + 1;
            break;
        }
        out.iterations = it + 1;
    }
    out.x = x;
    out.value = -phi;
    out.evaluations = evaluations;
    out
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    let (s, y, _) = pairs.back().expect("nonempty memory");
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|v| *v *= gamma);
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[k] - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(center: Vec<f64>) -> impl FnMut(&[f64], &mut [f64]) -> f64 {
        move |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..x.len() {
                let w = (i + 1) as f64;
                v -= w * (x[i] - center[i]).powi(2);
                g[i] = -2.0 * w * (x[i] - center[i]);
            }
            v
        }
    }

    #[test]
    fn interior_peak() {
        let dom = SearchDomain::unit(3);
        let out = maximize_local(quad(vec![0.5, 0.5, 0.5]), &[0.1, 0.9, 0.3], &dom, &LocalSettings::default());
        assert!(out.converged);
        for v in &out.x {
            assert!((v - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn peak_outside_box_hits_boundary() {
        let dom = SearchDomain::unit(2);
        let out = maximize_local(quad(vec![1.7, -0.4]), &[0.5, 0.5], &dom, &LocalSettings::default());
        assert_eq!(out.x, vec![1.0, 0.0]);
        assert!(dom.contains(&out.x));
    }

    #[test]
    fn rosenbrock_like_valley() {
        let dom = SearchDomain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -(-2.0 * (1.0 - a) - 400.0 * a * (b - a * a));
            g[1] = -(200.0 * (b - a * a));
            -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        };
        let out = maximize_local(
            f,
            &[-1.2, 1.0],
            &dom,
            &LocalSettings {
                max_iterations: 500,
                ..LocalSettings::default()
            },
        );
        assert!((out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4, "{:?}", out.x);
        assert!(out.value >= out.start_value);
    }
}
