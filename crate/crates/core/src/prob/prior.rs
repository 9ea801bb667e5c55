use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::prob::gaussian::Gaussian;
use crate::prob::rng::NoiseSource;
use crate::scalar::Scalar;

/// A prior density that can be sampled and differentiated.
pub trait Prior<T: Scalar> {
    fn dim(&self) -> usize;

    /// `log p(z)`; `-∞` outside the support.
    fn log_density_with<R: Real<T>>(&self, z: &[R]) -> R;

    fn sample(&self, noise: &mut NoiseSource) -> Vec<T>;

    fn as_gaussian(&self) -> Option<&Gaussian<T>> {
        None
    }
}

impl<T: Scalar> Prior<T> for Gaussian<T> {
    fn dim(&self) -> usize {
        Gaussian::dim(self)
    }

    fn log_density_with<R: Real<T>>(&self, z: &[R]) -> R {
        Gaussian::log_density_with(self, z)
    }

    fn sample(&self, noise: &mut NoiseSource) -> Vec<T> {
        Gaussian::sample(self, noise)
    }

    fn as_gaussian(&self) -> Option<&Gaussian<T>> {
        Some(self)
    }
}

/// Independent log-uniform components on `[lo, hi]`: `ln z_i ~ U(ln lo, ln hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogUniformPrior<T> {
    lo: T,
    hi: T,
    dim: usize,
}

impl<T: Scalar> LogUniformPrior<T> {
    pub fn new(lo: T, hi: T, dim: usize) -> Result<Self> {
        if !(lo > T::zero() && hi > lo && hi.is_finite()) {
            return Err(Error::Parameter {
                name: "bounds",
                reason: format!("need 0 < lo < hi, got [{lo}, {hi}]"),
            });
        }
        Ok(Self { lo, hi, dim })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn contains(&self, z: &[T]) -> bool {
        z.iter().all(|&v| v >= self.lo && v <= self.hi)
    }
}

impl<T: Scalar> Prior<T> for LogUniformPrior<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_with<R: Real<T>>(&self, z: &[R]) -> R {
        let width = (self.hi / self.lo).ln().ln();
        let mut acc = z[0].zero_like();
        for &v in z {
            if v.value() < self.lo || v.value() > self.hi {
                return v.lift(T::neg_infinity());
            }
            acc = acc - v.ln() - width;
        }
        acc
    }

    fn sample(&self, noise: &mut NoiseSource) -> Vec<T> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..self.dim).map(|_| noise.uniform_in(a, b).exp().max(self.lo).min(self.hi)).collect()
    }
}

/// Independent uniform components on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPrior<T> {
    lo: T,
    hi: T,
    dim: usize,
}

impl<T: Scalar> UniformPrior<T> {
    pub fn new(lo: T, hi: T, dim: usize) -> Result<Self> {
        if !(hi > lo && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Parameter {
                name: "bounds",
                reason: format!("need lo < hi, got [{lo}, {hi}]"),
            });
        }
        Ok(Self { lo, hi, dim })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }
}

impl<T: Scalar> Prior<T> for UniformPrior<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_with<R: Real<T>>(&self, z: &[R]) -> R {
        let log_width = (self.hi - self.lo).ln();
        for v in z {
            if v.value() < self.lo || v.value() > self.hi {
                return v.lift(T::neg_infinity());
            }
        }
        z[0].lift(-log_width * T::of_usize(self.dim))
    }

    fn sample(&self, noise: &mut NoiseSource) -> Vec<T> {
        (0..self.dim).map(|_| noise.uniform_in(self.lo, self.hi)).collect()
    }
}

/// Independent blocks `p(a, b) = p₁(a) p₂(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPrior<A, B> {
    pub first: A,
    pub second: B,
}

impl<T: Scalar, A: Prior<T>, B: Prior<T>> Prior<T> for ProductPrior<A, B> {
    fn dim(&self) -> usize {
        self.first.dim() + self.second.dim()
    }

    fn log_density_with<R: Real<T>>(&self, z: &[R]) -> R {
        let (a, b) = z.split_at(self.first.dim());
        self.first.log_density_with(a) + self.second.log_density_with(b)
    }

    fn sample(&self, noise: &mut NoiseSource) -> Vec<T> {
        let mut z = self.first.sample(noise);
        z.extend(self.second.sample(noise));
        z
    }
}
