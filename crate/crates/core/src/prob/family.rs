use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::linalg::solve_lower;
use crate::prob::flow::FlowStack;
use crate::prob::gaussian::{Gaussian, GaussianVariational};
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// A reparameterizable, optionally conditional, variational density `q_φ(z | c)`.
///
/// Parameters are passed in explicitly so the same code runs on plain
/// scalars and on tape variables.
pub trait VariationalFamily<T: Scalar> {
    fn dim(&self) -> usize;

    fn cond_dim(&self) -> usize {
        0
    }

    fn num_params(&self) -> usize;

    fn init_params(&self, rng: &RandomStream) -> Vec<T>;

    /// Pushes base noise `ε ~ N(0, I)` through the reparameterization and
    /// returns the sample together with `log q(z | c)`.
    fn sample_with<R: Real<T>>(&self, params: &[R], eps: &[T], cond: &[T]) -> Result<(Vec<R>, R)>;

    fn log_density_with<R: Real<T>>(&self, params: &[R], z: &[R], cond: &[T]) -> Result<R>;

    /// Closed-form `KL(q ‖ p)` when available.
    fn kl_to_gaussian_with<R: Real<T>>(&self, _params: &[R], _cond: &[T], _p: &Gaussian<T>) -> Option<Result<R>> {
        None
    }
}

impl<T: Scalar> VariationalFamily<T> for GaussianVariational {
    fn dim(&self) -> usize {
        GaussianVariational::dim(self)
    }

    fn num_params(&self) -> usize {
        GaussianVariational::num_params(self)
    }

    fn init_params(&self, _rng: &RandomStream) -> Vec<T> {
        self.standard_params()
    }

    fn sample_with<R: Real<T>>(&self, params: &[R], eps: &[T], cond: &[T]) -> Result<(Vec<R>, R)> {
        check_dim("Gaussian conditioning", 0, cond.len())?;
        check_dim("Gaussian noise", GaussianVariational::dim(self), eps.len())?;
        let m = self.moments(params)?;
        Ok((m.transform(eps), m.log_density_at_noise(eps)))
    }

    fn log_density_with<R: Real<T>>(&self, params: &[R], z: &[R], cond: &[T]) -> Result<R> {
        check_dim("Gaussian conditioning", 0, cond.len())?;
        check_dim("Gaussian point", GaussianVariational::dim(self), z.len())?;
        Ok(self.moments(params)?.log_density(z))
    }

    fn kl_to_gaussian_with<R: Real<T>>(&self, params: &[R], _cond: &[T], p: &Gaussian<T>) -> Option<Result<R>> {
        Some(self.moments(params).and_then(|m| m.kl_to(p)))
    }
}

impl<T: Scalar> VariationalFamily<T> for FlowStack<T> {
    fn dim(&self) -> usize {
        FlowStack::dim(self)
    }

    fn cond_dim(&self) -> usize {
        FlowStack::cond_dim(self)
    }

    fn num_params(&self) -> usize {
        FlowStack::num_params(self)
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        FlowStack::init_params(self, rng)
    }

    fn sample_with<R: Real<T>>(&self, params: &[R], eps: &[T], cond: &[T]) -> Result<(Vec<R>, R)> {
        FlowStack::sample_with(self, params, eps, cond)
    }

    fn log_density_with<R: Real<T>>(&self, params: &[R], z: &[R], cond: &[T]) -> Result<R> {
        FlowStack::log_density_with(self, params, z, cond)
    }
}

/// Independent blocks `q(a) q(b)`; parameters are `a`'s followed by `b`'s,
/// samples are `a`'s coordinates followed by `b`'s.
#[derive(Debug, Clone)]
pub struct MeanField<A, B> {
    pub first: A,
    pub second: B,
}

impl<A, B> MeanField<A, B> {
    pub fn new(first: A, second: B) -> Self {
        Self { first, second }
    }
}

impl<T: Scalar, A: VariationalFamily<T>, B: VariationalFamily<T>> VariationalFamily<T> for MeanField<A, B> {
    fn dim(&self) -> usize {
        self.first.dim() + self.second.dim()
    }

    fn num_params(&self) -> usize {
        self.first.num_params() + self.second.num_params()
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        let mut p = self.first.init_params(&rng.substream(0));
        p.extend(self.second.init_params(&rng.substream(1)));
        p
    }

    fn sample_with<R: Real<T>>(&self, params: &[R], eps: &[T], cond: &[T]) -> Result<(Vec<R>, R)> {
        check_dim("mean-field parameters", VariationalFamily::num_params(self), params.len())?;
        check_dim("mean-field noise", VariationalFamily::dim(self), eps.len())?;
        let (pa, pb) = params.split_at(self.first.num_params());
        let (ea, eb) = eps.split_at(self.first.dim());
        let (mut za, la) = self.first.sample_with(pa, ea, cond)?;
        let (zb, lb) = self.second.sample_with(pb, eb, cond)?;
        za.extend(zb);
        Ok((za, la + lb))
    }

    fn log_density_with<R: Real<T>>(&self, params: &[R], z: &[R], cond: &[T]) -> Result<R> {
        check_dim("mean-field parameters", VariationalFamily::num_params(self), params.len())?;
        check_dim("mean-field point", VariationalFamily::dim(self), z.len())?;
        let (pa, pb) = params.split_at(self.first.num_params());
        let (za, zb) = z.split_at(self.first.dim());
        Ok(self.first.log_density_with(pa, za, cond)? + self.second.log_density_with(pb, zb, cond)?)
    }
}

/// A family pushed through a fixed affine map `u = C v + b` with `C` lower
/// triangular and positive on the diagonal (an output preconditioner).
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioned<Q, T> {
    pub inner: Q,
    lower: Vec<T>,
    shift: Vec<T>,
    log_det: T,
}

impl<T: Scalar, Q: VariationalFamily<T>> Preconditioned<Q, T> {
    pub fn new(inner: Q, lower: Vec<T>, shift: Vec<T>) -> Result<Self> {
        let d = inner.dim();
        check_dim("preconditioner", d * d, lower.len())?;
        check_dim("preconditioner shift", d, shift.len())?;
        if let Some(i) = (0..d).find(|&i| !(lower[i * d + i] > T::zero())) {
            return Err(Error::Parameter {
                name: "preconditioner",
                reason: format!("diagonal entry {i} is not positive"),
            });
        }
        if (0..d).any(|i| (i + 1..d).any(|j| lower[i * d + j] != T::zero())) {
            return Err(Error::Parameter {
                name: "preconditioner",
                reason: "must be lower triangular".into(),
            });
        }
        let log_det = (0..d).map(|i| lower[i * d + i].ln()).sum();
        Ok(Self {
            inner,
            lower,
            shift,
            log_det,
        })
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn shift(&self) -> &[T] {
        &self.shift
    }

    /// `C v + b`.
    pub fn apply_with<R: Real<T>>(&self, v: &[R]) -> Vec<R> {
        let d = self.shift.len();
        (0..d)
            .map(|i| R::dot_const(&v[..=i], &self.lower[i * d..i * d + i + 1]) + self.shift[i])
            .collect()
    }
}

impl<T: Scalar, Q: VariationalFamily<T>> VariationalFamily<T> for Preconditioned<Q, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn cond_dim(&self) -> usize {
        self.inner.cond_dim()
    }

    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.inner.init_params(rng)
    }

    fn sample_with<R: Real<T>>(&self, params: &[R], eps: &[T], cond: &[T]) -> Result<(Vec<R>, R)> {
        let (v, lq) = self.inner.sample_with(params, eps, cond)?;
        Ok((self.apply_with(&v), lq - self.log_det))
    }

    fn log_density_with<R: Real<T>>(&self, params: &[R], z: &[R], cond: &[T]) -> Result<R> {
        check_dim("preconditioned point", self.dim(), z.len())?;
        let centered: Vec<R> = z.iter().zip(&self.shift).map(|(&u, &b)| u - b).collect();
        let v = solve_lower(&self.lower, self.dim(), &centered);
        Ok(self.inner.log_density_with(params, &v, cond)? - self.log_det)
    }
}
