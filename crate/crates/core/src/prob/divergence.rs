use crate::error::{check_dim, Error, Result};
use crate::prob::flow::FlowStack;
use crate::prob::gaussian::{Gaussian, GaussianVariational};
use crate::prob::rng::{NoiseSource, RandomStream};
use crate::scalar::{log_sum_exp, Scalar};

/// A divergence value with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate<T> {
    pub value: T,
    /// Zero for closed-form values.
    pub std_error: T,
    /// Zero for closed-form values.
    pub samples: usize,
}

/// A normalized density on `ℝ^d`.
pub trait Density<T: Scalar> {
    fn dim(&self) -> usize;
    fn log_density(&self, z: &[T]) -> Result<T>;
}

/// A density that can also be sampled.
pub trait Distribution<T: Scalar>: Density<T> {
    fn sample(&self, noise: &mut NoiseSource) -> Result<Vec<T>>;
}

impl<T: Scalar> Density<T> for Gaussian<T> {
    fn dim(&self) -> usize {
        Gaussian::dim(self)
    }

    fn log_density(&self, z: &[T]) -> Result<T> {
        Gaussian::log_density(self, z)
    }
}

impl<T: Scalar> Distribution<T> for Gaussian<T> {
    fn sample(&self, noise: &mut NoiseSource) -> Result<Vec<T>> {
        Ok(Gaussian::sample(self, noise))
    }
}

/// A flow with fixed parameters and conditioning input.
#[derive(Debug, Clone, Copy)]
pub struct FlowDistribution<'a, T> {
    pub flow: &'a FlowStack<T>,
    pub params: &'a [T],
    pub cond: &'a [T],
}

impl<T: Scalar> Density<T> for FlowDistribution<'_, T> {
    fn dim(&self) -> usize {
        self.flow.dim()
    }

    fn log_density(&self, z: &[T]) -> Result<T> {
        self.flow.log_density(self.params, z, self.cond)
    }
}

impl<T: Scalar> Distribution<T> for FlowDistribution<'_, T> {
    fn sample(&self, noise: &mut NoiseSource) -> Result<Vec<T>> {
        let eps = noise.normals(self.flow.dim());
        Ok(self.flow.sample(self.params, &eps, self.cond)?.0)
    }
}

/// Sample mean and its standard error `sd / √n`.
pub fn mean_and_std_error<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let mean = xs.iter().copied().sum::<T>() / T::of_usize(n);
    if n == 1 {
        return (mean, T::zero());
    }
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / T::of_usize(n - 1);
    (mean, (var / T::of_usize(n)).sqrt())
}

/// Exact `KL(q ‖ p)` between Gaussians.
pub fn kl_gaussian_closed<T: Scalar>(q: &Gaussian<T>, p: &Gaussian<T>) -> Result<DivergenceEstimate<T>> {
    check_dim("KL dimension", p.dim(), q.dim())?;
    let family = GaussianVariational::full(q.dim())?;
    let value = family.moments(&family.params_for(q)?)?.kl_to(p)?;
    Ok(DivergenceEstimate {
        value: value.max(T::zero()),
        std_error: T::zero(),
        samples: 0,
    })
}

fn check_samples(s: usize) -> Result<()> {
    if s == 0 {
        Err(Error::Parameter {
            name: "samples",
            reason: "need at least one Monte Carlo sample".into(),
        })
    } else {
        Ok(())
    }
}

fn finite_ratio<T: Scalar>(v: T, what: &str) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::SupportViolation(format!("{what} = {v}")))
    }
}

/// `E_q[log q − log p]` from `s` draws of `q`.
///
/// `q` must be absolutely continuous with respect to `p`; a non-finite
/// log-ratio is reported as a support violation.
pub fn kl_monte_carlo<T: Scalar>(
    q: &impl Distribution<T>,
    p: &impl Density<T>,
    s: usize,
    rng: &RandomStream,
) -> Result<DivergenceEstimate<T>> {
    check_samples(s)?;
    check_dim("KL dimension", q.dim(), p.dim())?;
    let mut noise = rng.generator();
    let mut terms = Vec::with_capacity(s);
    for _ in 0..s {
        let z = q.sample(&mut noise)?;
        terms.push(finite_ratio(q.log_density(&z)? - p.log_density(&z)?, "log q - log p")?);
    }
    let (value, std_error) = mean_and_std_error(&terms);
    Ok(DivergenceEstimate {
        value,
        std_error,
        samples: s,
    })
}

/// `log((1 − α) e^{a} + α e^{b})`.
pub(crate) fn log_mixture<T: Scalar>(alpha: T, log_q: T, log_p: T) -> T {
    let one = T::one();
    if alpha == one {
        return log_p;
    }
    log_sum_exp(&[(one - alpha).ln() + log_q, alpha.ln() + log_p])
}

pub(crate) fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha <= T::one() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "alpha",
            reason: format!("must lie in (0, 1], got {alpha}"),
        })
    }
}

/// `α KL(q ‖ m) + (1 − α) KL(p ‖ m)` with mixture `m = (1 − α) q + α p`.
///
/// `α = 1` gives `KL(q ‖ p)`; `α = 0` is rejected.
pub fn js_alpha<T: Scalar>(
    q: &impl Distribution<T>,
    p: &impl Distribution<T>,
    alpha: T,
    s: usize,
    rng: &RandomStream,
) -> Result<DivergenceEstimate<T>> {
    check_alpha(alpha)?;
    check_samples(s)?;
    check_dim("JS dimension", q.dim(), p.dim())?;
    let term = |first: &dyn Fn(&mut NoiseSource) -> Result<Vec<T>>, from_q: bool, stream: RandomStream| -> Result<Vec<T>> {
        let mut noise = stream.generator();
        (0..s)
            .map(|_| {
                let z = first(&mut noise)?;
                let (lq, lp) = (q.log_density(&z)?, p.log_density(&z)?);
                let own = if from_q { lq } else { lp };
                finite_ratio(own - log_mixture(alpha, lq, lp), "log-ratio to mixture")
            })
            .collect()
    };
    let (mq, sq) = mean_and_std_error(&term(&|n| q.sample(n), true, rng.substream(0))?);
    let one = T::one();
    let (mp, sp) = if alpha == one {
        (T::zero(), T::zero())
    } else {
        mean_and_std_error(&term(&|n| p.sample(n), false, rng.substream(1))?)
    };
    Ok(DivergenceEstimate {
        value: alpha * mq + (one - alpha) * mp,
        std_error: (alpha * alpha * sq * sq + (one - alpha) * (one - alpha) * sp * sp).sqrt(),
        samples: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n1(m: f64, s: f64) -> Gaussian<f64> {
        Gaussian::diagonal(vec![m], &[s]).unwrap()
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(kl_gaussian_closed(&n1(0.3, 1.2), &n1(0.3, 1.2)).unwrap().value, 0.0);
        assert!((kl_gaussian_closed(&n1(1.0, 1.0), &n1(0.0, 1.0)).unwrap().value - 0.5).abs() < 1e-14);
        let v = kl_gaussian_closed(&n1(0.0, 2.0), &n1(0.0, 1.0)).unwrap().value;
        assert!((v - 0.806_852_819_440_054_7).abs() < 1e-12);
    }

    #[test]
    fn mc_matches_closed_form() {
        let est = kl_monte_carlo(&n1(1.0, 1.0), &n1(0.0, 1.0), 100_000, &RandomStream::new(5, 0)).unwrap();
        assert!((est.value - 0.5).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn js_rejects_zero_alpha() {
        let q = n1(0.0, 1.0);
        assert!(js_alpha(&q, &q, 0.0, 10, &RandomStream::new(0, 0)).is_err());
        assert!(js_alpha(&q, &q, 1.5, 10, &RandomStream::new(0, 0)).is_err());
    }

    #[test]
    fn js_of_identical_distributions_is_zero() {
        let q = n1(0.4, 0.8);
        let est = js_alpha(&q, &q, 0.3, 1000, &RandomStream::new(0, 0)).unwrap();
        assert!(est.value.abs() < 1e-12);
    }

    #[test]
    fn mixture_log_density() {
        let v = log_mixture(0.25, 0.0_f64, (2.0_f64).ln());
        assert!((v - (0.75 + 0.25 * 2.0_f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn support_violation_is_reported() {
        struct Point;
        impl Density<f64> for Point {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, _: &[f64]) -> Result<f64> {
                Ok(f64::NEG_INFINITY)
            }
        }
        let err = kl_monte_carlo(&n1(0.0, 1.0), &Point, 5, &RandomStream::new(0, 0));
        assert!(matches!(err, Err(Error::SupportViolation(_))));
    }
}
