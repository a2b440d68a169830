use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct TaggedRecord<T> {
    pub x: Vec<T>,
    /// Zero-based output, fidelity or constituent index.
    pub tag: usize,
    pub y: T,
    pub cost: T,
}

/// Observations of individual outputs of `h`. Rows need not cover every
/// output at a given `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedDataset<T> {
    records: Vec<TaggedRecord<T>>,
    noise: Vec<T>,
}

impl<T: Real> TaggedDataset<T> {
    /// `noise[j]` is the observation noise variance of output `j`.
    pub fn new(noise: Vec<T>) -> Result<Self> {
        if noise.is_empty() {
            return Err(Error::InvalidDataset("at least one output required".into()));
        }
        if noise.iter().any(|&v| !(v >= T::zero())) {
            return Err(Error::InvalidDataset("noise variances must be nonnegative".into()));
        }
        Ok(Self {
            records: Vec::new(),
            noise,
        })
    }

    pub fn noiseless(outputs: usize) -> Result<Self> {
        Self::new(vec![T::zero(); outputs])
    }

    pub fn outputs(&self) -> usize {
        self.noise.len()
    }

    pub fn push(&mut self, x: Vec<T>, tag: usize, y: T, cost: T) -> Result<()> {
        if tag >= self.outputs() {
            return Err(Error::InvalidDataset(format!(
                "tag {tag} out of range for {} outputs",
                self.outputs()
            )));
        }
        if !(cost >= T::zero()) {
            return Err(Error::InvalidDataset("costs must be nonnegative".into()));
        }
        if let Some(first) = self.records.first() {
            if first.x.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.x.len(),
                    got: x.len(),
                });
            }
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite record".into()));
        }
        self.records.push(TaggedRecord { x, tag, y, cost });
        Ok(())
    }

    /// Pushes every output of `h(x)`, each with cost `cost_each`.
    pub fn push_all(&mut self, x: &[T], ys: &[T], cost_each: T) -> Result<()> {
        if ys.len() != self.outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.outputs(),
                got: ys.len(),
            });
        }
        for (j, &y) in ys.iter().enumerate() {
            self.push(x.to_vec(), j, y, cost_each)?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[TaggedRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn noise(&self) -> &[T] {
        &self.noise
    }

    pub fn with_noise(&self, noise: Vec<T>) -> Result<Self> {
        if noise.len() != self.outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.outputs(),
                got: noise.len(),
            });
        }
        Ok(Self {
            records: self.records.clone(),
            noise,
        })
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.x.len())
    }

    pub fn total_cost(&self) -> T {
        self.records.iter().map(|r| r.cost).sum()
    }
}
