//! Amortized forward-KL inference and the surrogate-plus-flow objective.

use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::models::maps::ForwardModel;
use crate::models::params::ParamLayout;
use crate::objectives::{check_samples, mc_mean, Loss, Objective};
use crate::pde::observe::NoiseCovariance;
use crate::prob::family::VariationalFamily;
use crate::prob::prior::Prior;
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// Draws `z ~ p(z)` and `y = G(z) + Γ^{1/2} ε` from stream `m`.
pub fn joint_sample<T: Scalar, P: Prior<T>>(
    prior: &P,
    noise: &NoiseCovariance<T>,
    stream: &RandomStream,
    map: impl FnOnce(&[T]) -> Result<Vec<T>>,
) -> Result<(Vec<T>, Vec<T>)> {
    let mut g = stream.generator();
    let z = prior.sample(&mut g);
    let mean = map(&z)?;
    check_dim("observation", noise.dim(), mean.len())?;
    let e = noise.color(&g.normals(mean.len()));
    let y = mean.iter().zip(&e).map(|(&m, &e)| m + e).collect();
    Ok((z, y))
}

/// `½‖f⁻¹(z; y)‖² − log|det ∂f⁻¹|` averaged over pairs, i.e. `−log q(z|y)` without the base constant.
fn forward_kl_loss<T: Scalar, R: Real<T>, Q: VariationalFamily<T>>(
    family: &Q,
    phi: &[R],
    anchor: R,
    pairs: &[(Vec<T>, Vec<T>)],
) -> Result<Loss<R, T>> {
    let c = T::of_usize(family.dim()) * T::of(0.5) * T::ln_two_pi();
    let mut terms = Vec::with_capacity(pairs.len());
    for (z, y) in pairs {
        let zr: Vec<R> = z.iter().map(|&v| anchor.lift(v)).collect();
        terms.push(-family.log_density_with(phi, &zr, y)? - c);
    }
    Ok(mc_mean(&terms))
}

/// Amortized forward KL `E_{p(z,y)}[−log q_φ(z|y)]` with fresh joint draws per evaluation.
#[derive(Debug, Clone)]
pub struct ForwardKl<Q, M, P, T> {
    pub family: Q,
    pub map: M,
    pub noise: NoiseCovariance<T>,
    pub prior: P,
    pub pairs: usize,
}

impl<T: Scalar, Q: VariationalFamily<T>, M: ForwardModel<T>, P: Prior<T>> ForwardKl<Q, M, P, T> {
    pub fn new(family: Q, map: M, noise: NoiseCovariance<T>, prior: P, pairs: usize) -> Result<Self> {
        check_samples(pairs)?;
        check_dim("prior dimension", family.dim(), prior.dim())?;
        check_dim("map input", family.dim(), map.input_dim())?;
        check_dim("flow conditioning", family.cond_dim(), map.output_dim())?;
        check_dim("observation noise", map.output_dim(), noise.dim())?;
        Ok(Self {
            family,
            map,
            noise,
            prior,
            pairs,
        })
    }

    /// The joint draws used by one evaluation with `noise`.
    pub fn draws(&self, noise: &RandomStream) -> Result<Vec<(Vec<T>, Vec<T>)>> {
        (0..self.pairs)
            .map(|m| joint_sample(&self.prior, &self.noise, &noise.substream(m as u64), |z| self.map.apply(&[], z)))
            .collect()
    }
}

impl<T: Scalar, Q: VariationalFamily<T>, M: ForwardModel<T>, P: Prior<T>> Objective<T> for ForwardKl<Q, M, P, T> {
    fn name(&self) -> &'static str {
        "forward_kl"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new().with("phi", self.family.num_params())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.family.init_params(rng)
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        let Some(&anchor) = params.first() else {
            return Err(Error::Parameter {
                name: "phi",
                reason: "forward KL needs a parameterized family".into(),
            });
        };
        forward_kl_loss(&self.family, params, anchor, &self.draws(noise)?)
    }
}

/// Surrogate regression `mean_k ‖F_θ(z_k) − u_k‖²` plus the forward KL of a
/// conditional flow trained on `y = H(F_θ(z)) + ε`.
///
/// Parameters are `[θ, φ]`. The simulated `y` is detached from `θ`, so the
/// flow term only trains `φ` and the regression term only trains `θ`.
#[derive(Debug, Clone)]
pub struct SurrogateFlow<S, H, Q, P, T> {
    pub surrogate: S,
    pub observe: H,
    pub family: Q,
    pub noise: NoiseCovariance<T>,
    pub prior: P,
    pub data: Vec<(Vec<T>, Vec<T>)>,
    pub pairs: usize,
}

impl<T, S, H, Q, P> SurrogateFlow<S, H, Q, P, T>
where
    T: Scalar,
    S: ForwardModel<T>,
    H: ForwardModel<T>,
    Q: VariationalFamily<T>,
    P: Prior<T>,
{
    pub fn new(
        surrogate: S,
        observe: H,
        family: Q,
        noise: NoiseCovariance<T>,
        prior: P,
        data: Vec<(Vec<T>, Vec<T>)>,
        pairs: usize,
    ) -> Result<Self> {
        check_samples(pairs)?;
        check_samples(data.len())?;
        check_dim("prior dimension", family.dim(), prior.dim())?;
        check_dim("surrogate input", family.dim(), surrogate.input_dim())?;
        check_dim("observation input", surrogate.output_dim(), observe.input_dim())?;
        check_dim("flow conditioning", family.cond_dim(), observe.output_dim())?;
        check_dim("observation noise", observe.output_dim(), noise.dim())?;
        for (z, u) in &data {
            check_dim("training input", surrogate.input_dim(), z.len())?;
            check_dim("training output", surrogate.output_dim(), u.len())?;
        }
        Ok(Self {
            surrogate,
            observe,
            family,
            noise,
            prior,
            data,
            pairs,
        })
    }

    fn split<'a, R>(&self, params: &'a [R]) -> Result<(&'a [R], &'a [R])> {
        check_dim("surrogate-flow parameters", self.surrogate.num_params() + self.family.num_params(), params.len())?;
        Ok(params.split_at(self.surrogate.num_params()))
    }

    /// Mean squared surrogate error over the training pairs.
    pub fn regression_with<R: Real<T>>(&self, theta: &[R], anchor: R) -> Result<R> {
        let mut acc = anchor.zero_like();
        for (z, u) in &self.data {
            let zr: Vec<R> = z.iter().map(|&v| anchor.lift(v)).collect();
            let pred = self.surrogate.apply_with(theta, &zr)?;
            for (p, &t) in pred.iter().zip(u) {
                acc = acc + (*p - t).square();
            }
        }
        Ok(acc / T::of_usize(self.data.len()))
    }

    /// Regression loss and flow loss separately.
    pub fn parts(&self, params: &[T], noise: &RandomStream) -> Result<(T, T)> {
        let (theta, phi) = self.split(params)?;
        let reg = self.regression_with(theta, T::zero())?;
        let kl = forward_kl_loss(&self.family, phi, T::zero(), &self.draws(theta, noise)?)?;
        Ok((reg, kl.value))
    }

    fn draws(&self, theta: &[T], noise: &RandomStream) -> Result<Vec<(Vec<T>, Vec<T>)>> {
        (0..self.pairs)
            .map(|m| {
                joint_sample(&self.prior, &self.noise, &noise.substream(m as u64), |z| {
                    let u = self.surrogate.apply(theta, z)?;
                    self.observe.apply(&[], &u)
                })
            })
            .collect()
    }
}

impl<T, S, H, Q, P> Objective<T> for SurrogateFlow<S, H, Q, P, T>
where
    T: Scalar,
    S: ForwardModel<T>,
    H: ForwardModel<T>,
    Q: VariationalFamily<T>,
    P: Prior<T>,
{
    fn name(&self) -> &'static str {
        "surrogate_flow"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new()
            .with("theta", self.surrogate.num_params())
            .with("phi", self.family.num_params())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        let mut p = self.surrogate.init_params(&rng.substream(0));
        p.extend(self.family.init_params(&rng.substream(1)));
        p
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        let (theta, phi) = self.split(params)?;
        let theta_values: Vec<T> = theta.iter().map(|t| t.value()).collect();
        let Some(&anchor) = params.first() else {
            return Err(Error::Parameter {
                name: "params",
                reason: "surrogate-flow objective has no parameters".into(),
            });
        };
        let reg = self.regression_with(theta, anchor)?;
        let kl = forward_kl_loss(&self.family, phi, anchor, &self.draws(&theta_values, noise)?)?;
        Ok(Loss {
            value: reg + kl.value,
            std_error: kl.std_error,
        })
    }

    fn frozen_value(&self, params: &[T], frozen: &[T], noise: &RandomStream) -> Result<T> {
        let (theta, phi) = self.split(params)?;
        let (theta_frozen, _) = self.split(frozen)?;
        let reg = self.regression_with(theta, T::zero())?;
        let kl = forward_kl_loss(&self.family, phi, T::zero(), &self.draws(theta_frozen, noise)?)?;
        Ok(reg + kl.value)
    }
}
