use std::f64::consts::PI;

use rand::Rng;

use crate::qmc;

#[derive(Clone, Debug, PartialEq)]
struct Term {
    amp: f64,
    freq: Vec<f64>,
    phase: f64,
}

/// Seeded family of smooth functions, each a sum of sinusoids
/// `sum_t a_t sin(omega_t . x + phi_t)`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SineFamily {
    funcs: Vec<Vec<Term>>,
}

impl SineFamily {
    /// `count` functions of `dim` inputs with `terms` sinusoids each;
    /// frequencies are uniform in `[-max_freq, max_freq]` per input.
    pub fn new(count: usize, dim: usize, terms: usize, max_freq: f64, seed: u64, stream: u64) -> Self {
        let mut r = qmc::rng(seed, stream);
        let funcs = (0..count)
            .map(|_| {
                (0..terms)
                    .map(|_| Term {
                        amp: r.random_range(0.5..1.5),
                        freq: (0..dim).map(|_| r.random_range(-max_freq..max_freq)).collect(),
                        phase: r.random_range(0.0..2.0 * PI),
                    })
                    .collect()
            })
            .collect();
        Self { funcs }
    }

    pub fn eval(&self, j: usize, x: &[f64]) -> f64 {
        self.funcs[j]
            .iter()
            .map(|t| t.amp * (phase(t, x)).sin())
            .sum()
    }

    pub fn grad(&self, j: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.funcs[j] {
            let c = t.amp * phase(t, x).cos();
            for (o, w) in out.iter_mut().zip(&t.freq) {
                *o += c * w;
            }
        }
    }
}

fn phase(t: &Term, x: &[f64]) -> f64 {
    t.freq.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + t.phase
}
