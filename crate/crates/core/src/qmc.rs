//! Seeded random streams and scrambled low-discrepancy designs.
//!
//! All randomness goes through ChaCha8, a counter-based generator whose
//! output is identical on every platform for a given (seed, stream) pair.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::Matrix;

pub type Rng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// One standard normal draw.
pub fn standard_normal(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

/// `rows x cols` matrix of standard normal draws.
pub fn normal_draws(seed: u64, stream: u64, rows: usize, cols: usize) -> Matrix<f64> {
    let mut r = rng(seed, stream);
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
}

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

/// Halton sequence with independent random digit permutations per dimension
/// and digit position.
#[derive(Clone, Debug)]
pub struct ScrambledHalton {
    bases: Vec<u32>,
    perms: Vec<Vec<Vec<u32>>>,
}

impl ScrambledHalton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1 && dim <= PRIMES.len(), "Halton dimension out of range");
        let mut r = rng(seed, 0x4841_4c54);
        let bases: Vec<u32> = PRIMES[..dim].to_vec();
        let perms = bases
            .iter()
            .map(|&b| {
                let digits = digits_for_precision(b);
                (0..digits)
                    .map(|_| {
                        let mut p: Vec<u32> = (0..b).collect();
                        p.shuffle(&mut r);
                        p
                    })
                    .collect()
            })
            .collect();
        Self { bases, perms }
    }

    pub fn dim(&self) -> usize {
        self.bases.len()
    }

    /// Point `index` of the sequence, in `[0, 1)^d`.
    pub fn point(&self, index: u64) -> Vec<f64> {
        self.bases
            .iter()
            .zip(&self.perms)
            .map(|(&b, perms)| {
                let mut n = index;
                let mut f = 1.0 / b as f64;
                let mut v = 0.0;
                for p in perms {
                    let digit = (n % b as u64) as usize;
                    v += p[digit] as f64 * f;
                    n /= b as u64;
                    f /= b as f64;
                }
                v.min(1.0 - f64::EPSILON)
            })
            .collect()
    }

    pub fn points(&self, count: usize) -> Vec<Vec<f64>> {
        (0..count as u64).map(|i| self.point(i)).collect()
    }
}

fn digits_for_precision(base: u32) -> usize {
    (53.0 * std::f64::consts::LN_2 / (base as f64).ln()).ceil() as usize
}

/// Scrambled Halton points mapped into the box `[lower, upper]`.
pub fn design(lower: &[f64], upper: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let h = ScrambledHalton::new(lower.len(), seed);
    h.points(count)
        .into_iter()
        .map(|u| {
            u.iter()
                .zip(lower.iter().zip(upper))
                .map(|(&t, (&lo, &hi))| lo + t * (hi - lo))
                .collect()
        })
        .collect()
}
