use crate::error::{Error, Result};
use crate::gp::SearchDomain;
use crate::scalar::Real;

/// Evaluation records in evaluation order, with a shared noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    xs: Vec<Vec<T>>,
    ys: Vec<T>,
    noise_variance: T,
}

impl<T: Real> Dataset<T> {
    pub fn new(noise_variance: T) -> Result<Self> {
        if !(noise_variance >= T::zero()) {
            return Err(Error::InvalidDataset("noise variance must be nonnegative".into()));
        }
        Ok(Self {
            xs: Vec::new(),
            ys: Vec::new(),
            noise_variance,
        })
    }

    pub fn from_records(xs: Vec<Vec<T>>, ys: Vec<T>, noise_variance: T) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        let mut d = Self::new(noise_variance)?;
        for (x, y) in xs.into_iter().zip(ys) {
            d.push(x, y)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, x: Vec<T>, y: T) -> Result<()> {
        if let Some(first) = self.xs.first() {
            if first.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: x.len(),
                });
            }
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite record".into()));
        }
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.xs.first().map(Vec::len)
    }

    pub fn xs(&self) -> &[Vec<T>] {
        &self.xs
    }

    pub fn ys(&self) -> &[T] {
        &self.ys
    }

    pub fn noise_variance(&self) -> T {
        self.noise_variance
    }

    pub fn with_noise_variance(&self, noise_variance: T) -> Self {
        Self {
            noise_variance,
            ..self.clone()
        }
    }

    pub fn with_ys(&self, ys: Vec<T>) -> Self {
        assert_eq!(ys.len(), self.len());
        Self {
            ys,
            ..self.clone()
        }
    }

    pub fn check_within(&self, domain: &SearchDomain<T>) -> Result<()> {
        match self.xs.iter().position(|x| !domain.contains(x)) {
            Some(i) => Err(Error::InvalidDataset(format!("record {i} lies outside the domain"))),
            None => Ok(()),
        }
    }
}
