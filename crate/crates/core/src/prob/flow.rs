//! Normalizing flows built from affine couplings and fixed permutations.
//!
//! The forward map `f` sends base noise `w ~ N(0, I)` to `z = f(w)`; densities
//! use `log q(z) = log N(f⁻¹(z)) + log|det ∂f⁻¹/∂z|`.

use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::models::mlp::{Activation, MlpShape};
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

const SCALE_BOUND: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub enum FlowLayer<T> {
    /// Keeps the first `split` coordinates and applies `z₂ = w₂ ⊙ exp(s) + t`
    /// to the rest, with `(s, t)` produced by `net` from `(w₁, cond)`.
    Coupling { split: usize, net: MlpShape, offset: usize },
    /// Reverses coordinate order.
    Reverse,
    /// `z = scale ⊙ w + shift` with no learnable parameters.
    FixedAffine { scale: Vec<T>, shift: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack<T> {
    dim: usize,
    cond_dim: usize,
    layers: Vec<FlowLayer<T>>,
    num_params: usize,
}

fn bounded<T: Scalar, R: Real<T>>(raw: R) -> R {
    let c = T::of(SCALE_BOUND);
    (raw / c).tanh() * c
}

impl<T: Scalar> FlowStack<T> {
    /// `couplings` affine-coupling layers separated by coordinate reversals.
    ///
    /// With `dim == 1` each coupling is an elementwise affine map whose scale
    /// and shift depend only on the conditioning input.
    pub fn new(dim: usize, cond_dim: usize, couplings: usize, hidden: &[usize]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter {
                name: "dimension",
                reason: "flow needs at least one dimension".into(),
            });
        }
        let split = dim / 2;
        let mut flow = Self::identity(dim, cond_dim);
        for k in 0..couplings {
            if k > 0 && dim > 1 {
                flow.layers.push(FlowLayer::Reverse);
            }
            let d_in = split + cond_dim;
            let hidden = if d_in == 0 { &[][..] } else { hidden };
            let net = MlpShape::dense(d_in, hidden, 2 * (dim - split), Activation::Tanh)?;
            let offset = flow.num_params;
            flow.num_params += net.num_params();
            flow.layers.push(FlowLayer::Coupling { split, net, offset });
        }
        Ok(flow)
    }

    /// The identity flow with no layers.
    pub fn identity(dim: usize, cond_dim: usize) -> Self {
        Self {
            dim,
            cond_dim,
            layers: Vec::new(),
            num_params: 0,
        }
    }

    pub fn push_fixed_affine(mut self, scale: Vec<T>, shift: Vec<T>) -> Result<Self> {
        check_dim("affine scale", self.dim, scale.len())?;
        check_dim("affine shift", self.dim, shift.len())?;
        if scale.iter().any(|s| *s == T::zero() || !s.is_finite()) {
            return Err(Error::Parameter {
                name: "scale",
                reason: "affine scale must be finite and non-zero".into(),
            });
        }
        self.layers.push(FlowLayer::FixedAffine { scale, shift });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn layers(&self) -> &[FlowLayer<T>] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    /// Parameters for which every coupling is the identity.
    pub fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        let mut p = Vec::with_capacity(self.num_params);
        for (k, layer) in self.layers.iter().enumerate() {
            if let FlowLayer::Coupling { net, .. } = layer {
                p.extend(net.init_zero_output::<T>(&rng.substream(k as u64)));
            }
        }
        p
    }

    fn check(&self, params: usize, x: usize, cond: usize) -> Result<()> {
        check_dim("flow parameters", self.num_params, params)?;
        check_dim("flow input", self.dim, x)?;
        check_dim("flow conditioning", self.cond_dim, cond)
    }

    fn conditioner<R: Real<T>>(
        net: &MlpShape,
        params: &[R],
        kept: &[R],
        cond: &[T],
        anchor: R,
    ) -> Result<(Vec<R>, Vec<R>)> {
        let out = if kept.is_empty() {
            net.forward_const_with(params, cond)?
        } else {
            let mut input = kept.to_vec();
            input.extend(cond.iter().map(|&c| anchor.lift(c)));
            net.forward_with(params, &input)?
        };
        let half = out.len() / 2;
        let s = out[..half].iter().map(|&r| bounded(r)).collect();
        Ok((s, out[half..].to_vec()))
    }

    fn check_layer<R: Real<T>>(layer: usize, xs: &[R], ld: R) -> Result<()> {
        if xs.iter().all(|x| x.value().is_finite()) && ld.value().is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric {
                context: "flow",
                layer: Some(layer),
            })
        }
    }

    /// `z = f(w)` and `log|det ∂f/∂w|`.
    pub fn forward_with<R: Real<T>>(&self, params: &[R], w: &[R], cond: &[T]) -> Result<(Vec<R>, R)> {
        self.check(params.len(), w.len(), cond.len())?;
        let mut x = w.to_vec();
        let mut ld = w[0].zero_like();
        for (k, layer) in self.layers.iter().enumerate() {
            match layer {
                FlowLayer::Coupling { split, net, offset } => {
                    let p = &params[*offset..offset + net.num_params()];
                    let (s, t) = Self::conditioner(net, p, &x[..*split], cond, w[0])?;
                    for (i, (&si, &ti)) in s.iter().zip(&t).enumerate() {
                        let j = split + i;
                        x[j] = x[j] * si.exp() + ti;
                    }
                    ld = ld + R::sum(&s);
                }
                FlowLayer::Reverse => x.reverse(),
                FlowLayer::FixedAffine { scale, shift } => {
                    for ((xi, &a), &b) in x.iter_mut().zip(scale).zip(shift) {
                        *xi = *xi * a + b;
                    }
                    ld = ld + scale.iter().map(|a| a.abs().ln()).sum::<T>();
                }
            }
            Self::check_layer(k, &x, ld)?;
        }
        Ok((x, ld))
    }

    /// `w = f⁻¹(z)` and `log|det ∂f⁻¹/∂z|`.
    pub fn inverse_with<R: Real<T>>(&self, params: &[R], z: &[R], cond: &[T]) -> Result<(Vec<R>, R)> {
        self.check(params.len(), z.len(), cond.len())?;
        let mut x = z.to_vec();
        let mut ld = z[0].zero_like();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            match layer {
                FlowLayer::Coupling { split, net, offset } => {
                    let p = &params[*offset..offset + net.num_params()];
                    let (s, t) = Self::conditioner(net, p, &x[..*split], cond, z[0])?;
                    for (i, (&si, &ti)) in s.iter().zip(&t).enumerate() {
                        let j = split + i;
                        x[j] = (x[j] - ti) * (-si).exp();
                    }
                    ld = ld - R::sum(&s);
                }
                FlowLayer::Reverse => x.reverse(),
                FlowLayer::FixedAffine { scale, shift } => {
                    for ((xi, &a), &b) in x.iter_mut().zip(scale).zip(shift) {
                        *xi = (*xi - b) / a;
                    }
                    ld = ld - scale.iter().map(|a| a.abs().ln()).sum::<T>();
                }
            }
            Self::check_layer(k, &x, ld)?;
        }
        Ok((x, ld))
    }

    fn base_log_density<R: Real<T>>(w: &[R]) -> R {
        R::norm_squared(w) * T::of(-0.5) - T::of(0.5) * T::of_usize(w.len()) * T::ln_two_pi()
    }

    /// `log q(z | cond)`.
    pub fn log_density_with<R: Real<T>>(&self, params: &[R], z: &[R], cond: &[T]) -> Result<R> {
        let (w, ld) = self.inverse_with(params, z, cond)?;
        Ok(Self::base_log_density(&w) + ld)
    }

    /// `z = f(ε)` and `log q(z | cond)` for base noise `ε`.
    pub fn sample_with<R: Real<T>>(&self, params: &[R], eps: &[T], cond: &[T]) -> Result<(Vec<R>, R)> {
        check_dim("flow noise", self.dim, eps.len())?;
        let Some(anchor) = params.first() else {
            return Err(Error::Parameter {
                name: "flow",
                reason: "flow has no parameters to differentiate; use `sample`".into(),
            });
        };
        let w: Vec<R> = eps.iter().map(|&e| anchor.lift(e)).collect();
        let (z, ld) = self.forward_with(params, &w, cond)?;
        let e2: T = eps.iter().map(|&e| e * e).sum();
        Ok((z, -ld - T::of(0.5) * (e2 + T::of_usize(self.dim) * T::ln_two_pi())))
    }

    /// Plain-scalar sampling, valid for parameter-free flows too.
    pub fn sample(&self, params: &[T], eps: &[T], cond: &[T]) -> Result<(Vec<T>, T)> {
        let (z, ld) = self.forward_with(params, eps, cond)?;
        Ok((z, Self::base_log_density(eps) - ld))
    }

    pub fn log_density(&self, params: &[T], z: &[T], cond: &[T]) -> Result<T> {
        self.log_density_with(params, z, cond)
    }
}
