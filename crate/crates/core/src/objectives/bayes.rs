//! Reverse-KL objectives: Bayes VI, ELBO, mini-batch VAE, and the JS-α variant.

use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::models::params::ParamLayout;
use crate::objectives::likelihood::Likelihood;
use crate::objectives::{check_samples, log_sum_exp_with, mc_mean, Loss, Objective};
use crate::prob::divergence::check_alpha;
use crate::prob::family::VariationalFamily;
use crate::prob::prior::Prior;
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// Ingredients of one negative-ELBO estimate.
pub(crate) struct NegElbo<'a, T, Q, L, P> {
    pub family: &'a Q,
    pub likelihood: &'a L,
    pub prior: &'a P,
    pub samples: usize,
    pub offset: T,
    pub force_mc_kl: bool,
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> NegElbo<'_, T, Q, L, P> {
    /// `E_q[−log p(y|z) − c] + KL(q ‖ p)`; the KL is closed-form when both are Gaussian.
    pub fn loss<R: Real<T>>(&self, phi: &[R], theta: &[R], y: &[T], cond: &[T], noise: &RandomStream) -> Result<Loss<R, T>> {
        let closed = if self.force_mc_kl {
            None
        } else {
            self.prior
                .as_gaussian()
                .and_then(|p| self.family.kl_to_gaussian_with(phi, cond, p))
                .transpose()?
        };
        let d = self.family.dim();
        let mut terms = Vec::with_capacity(self.samples);
        for s in 0..self.samples {
            let eps = noise.substream(s as u64).normals(d);
            let (z, log_q) = self.family.sample_with(phi, &eps, cond)?;
            let ll = self.likelihood.log_likelihood_with(theta, &z, y)? + self.offset;
            terms.push(match closed {
                Some(_) => -ll,
                None => {
                    let lp = self.prior.log_density_with(&z);
                    if !lp.value().is_finite() {
                        return Err(Error::SupportViolation("sample outside prior support".into()));
                    }
                    log_q - ll - lp
                }
            });
        }
        let mut loss = mc_mean(&terms);
        if let Some(kl) = closed {
            loss.value = loss.value + kl;
        }
        Ok(loss)
    }
}

fn cond_for<'a, T: Scalar, Q: VariationalFamily<T>>(family: &Q, y: &'a [T]) -> Result<&'a [T]> {
    match family.cond_dim() {
        0 => Ok(&[]),
        c => {
            check_dim("variational conditioning", c, y.len())?;
            Ok(y)
        }
    }
}

/// `J(φ; y) = E_q[−log p(y|z)] + KL(q_φ ‖ p)`.
#[derive(Debug, Clone)]
pub struct BayesVi<Q, L, P, T> {
    pub family: Q,
    pub likelihood: L,
    pub prior: P,
    pub y: Vec<T>,
    pub samples: usize,
    /// Constant added to the unnormalized log-posterior.
    pub log_target_offset: T,
    /// Estimate the KL by Monte Carlo even when a closed form exists.
    pub force_mc_kl: bool,
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> BayesVi<Q, L, P, T> {
    pub fn new(family: Q, likelihood: L, prior: P, y: Vec<T>, samples: usize) -> Result<Self> {
        check_samples(samples)?;
        check_dim("prior dimension", family.dim(), prior.dim())?;
        check_dim("likelihood latent dimension", family.dim(), likelihood.latent_dim())?;
        if likelihood.num_params() != 0 {
            return Err(Error::Parameter {
                name: "likelihood",
                reason: "Bayes VI needs a fixed likelihood".into(),
            });
        }
        Ok(Self {
            family,
            likelihood,
            prior,
            y,
            samples,
            log_target_offset: T::zero(),
            force_mc_kl: false,
        })
    }

    pub fn with_log_target_offset(mut self, c: T) -> Self {
        self.log_target_offset = c;
        self
    }

    pub fn with_mc_kl(mut self) -> Self {
        self.force_mc_kl = true;
        self
    }
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> Objective<T> for BayesVi<Q, L, P, T> {
    fn name(&self) -> &'static str {
        "bayes_vi"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new().with("phi", self.family.num_params())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.family.init_params(rng)
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        let none: [R; 0] = [];
        let neg = NegElbo {
            family: &self.family,
            likelihood: &self.likelihood,
            prior: &self.prior,
            samples: self.samples,
            offset: self.log_target_offset,
            force_mc_kl: self.force_mc_kl,
        };
        neg.loss(params, &none, &self.y, cond_for(&self.family, &self.y)?, noise)
    }
}

/// Negative evidence lower bound `−(E_q[log p_θ(y|z)] − KL(q_φ ‖ p))` over `[φ, θ]`.
#[derive(Debug, Clone)]
pub struct Elbo<Q, L, P, T> {
    pub family: Q,
    pub decoder: L,
    pub prior: P,
    pub y: Vec<T>,
    pub samples: usize,
    pub force_mc_kl: bool,
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> Elbo<Q, L, P, T> {
    pub fn new(family: Q, decoder: L, prior: P, y: Vec<T>, samples: usize) -> Result<Self> {
        check_samples(samples)?;
        check_dim("prior dimension", family.dim(), prior.dim())?;
        check_dim("decoder latent dimension", family.dim(), decoder.latent_dim())?;
        Ok(Self {
            family,
            decoder,
            prior,
            y,
            samples,
            force_mc_kl: false,
        })
    }

    pub fn with_mc_kl(mut self) -> Self {
        self.force_mc_kl = true;
        self
    }

    /// The ELBO itself (not negated) and its standard error.
    pub fn estimate(&self, params: &[T], noise: &RandomStream) -> Result<(T, T)> {
        let l = self.loss_with(params, noise)?;
        Ok((-l.value, l.std_error))
    }
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> Objective<T> for Elbo<Q, L, P, T> {
    fn name(&self) -> &'static str {
        "elbo"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new()
            .with("phi", self.family.num_params())
            .with("theta", self.decoder.num_params())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        let mut p = self.family.init_params(&rng.substream(0));
        p.extend(self.decoder.init_params(&rng.substream(1)));
        p
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        check_dim("ELBO parameters", self.layout().len(), params.len())?;
        let (phi, theta) = params.split_at(self.family.num_params());
        let neg = NegElbo {
            family: &self.family,
            likelihood: &self.decoder,
            prior: &self.prior,
            samples: self.samples,
            offset: T::zero(),
            force_mc_kl: self.force_mc_kl,
        };
        neg.loss(phi, theta, &self.y, cond_for(&self.family, &self.y)?, noise)
    }
}

/// Mini-batch VAE objective `−(N/|B|) Σ_{n∈B} L(y⁽ⁿ⁾)` over `[φ, θ]`.
///
/// Datum `n` always draws its noise from `noise.substream(n)`, so every batch
/// containing `n` sees the same samples.
#[derive(Debug, Clone)]
pub struct Vae<Q, L, P, T> {
    pub encoder: Q,
    pub decoder: L,
    pub prior: P,
    pub data: Vec<Vec<T>>,
    pub batch: Vec<usize>,
    pub samples: usize,
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> Vae<Q, L, P, T> {
    pub fn new(encoder: Q, decoder: L, prior: P, data: Vec<Vec<T>>, samples: usize) -> Result<Self> {
        check_samples(samples)?;
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        check_dim("prior dimension", encoder.dim(), prior.dim())?;
        check_dim("decoder latent dimension", encoder.dim(), decoder.latent_dim())?;
        for y in &data {
            check_dim("encoder conditioning", encoder.cond_dim(), y.len())?;
        }
        let batch = (0..data.len()).collect();
        Ok(Self {
            encoder,
            decoder,
            prior,
            data,
            batch,
            samples,
        })
    }

    pub fn with_batch(mut self, batch: Vec<usize>) -> Result<Self> {
        self.set_batch(batch)?;
        Ok(self)
    }

    pub fn set_batch(&mut self, batch: Vec<usize>) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= self.data.len()) {
            return Err(Error::Parameter {
                name: "batch",
                reason: format!("index {bad} outside dataset of size {}", self.data.len()),
            });
        }
        self.batch = batch;
        Ok(())
    }

    /// Per-datum ELBO `L(y⁽ⁿ⁾)` and its standard error.
    pub fn datum_elbo(&self, params: &[T], n: usize, noise: &RandomStream) -> Result<(T, T)> {
        let l = self.datum_loss(params, n, noise)?;
        Ok((-l.value, l.std_error))
    }

    fn datum_loss<R: Real<T>>(&self, params: &[R], n: usize, noise: &RandomStream) -> Result<Loss<R, T>> {
        check_dim("VAE parameters", self.encoder.num_params() + self.decoder.num_params(), params.len())?;
        let (phi, theta) = params.split_at(self.encoder.num_params());
        let neg = NegElbo {
            family: &self.encoder,
            likelihood: &self.decoder,
            prior: &self.prior,
            samples: self.samples,
            offset: T::zero(),
            force_mc_kl: false,
        };
        let y = &self.data[n];
        neg.loss(phi, theta, y, y, &noise.substream(n as u64))
    }
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> Objective<T> for Vae<Q, L, P, T> {
    fn name(&self) -> &'static str {
        "vae"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new()
            .with("phi", self.encoder.num_params())
            .with("theta", self.decoder.num_params())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        let mut p = self.encoder.init_params(&rng.substream(0));
        p.extend(self.decoder.init_params(&rng.substream(1)));
        p
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        let scale = T::of_usize(self.data.len()) / T::of_usize(self.batch.len());
        let mut terms = Vec::with_capacity(self.batch.len());
        let mut var = T::zero();
        for &n in &self.batch {
            let l = self.datum_loss(params, n, noise)?;
            var += l.std_error * l.std_error;
            terms.push(l.value);
        }
        Ok(Loss {
            value: R::sum(&terms) * scale,
            std_error: var.sqrt() * scale,
        })
    }
}

/// `(1/α) JS_α(q ‖ p(·|y)) + KL(q ‖ p(·|y))` using only samples of `q`.
///
/// The posterior is known up to `log p(y)`. Inside the JS mixture it is
/// self-normalized over the current batch of samples (importance weights
/// `p̃/q`), which biases the JS term at finite `S`. The KL term drops `log p(y)`.
#[derive(Debug, Clone)]
pub struct JsVae<Q, L, P, T> {
    pub family: Q,
    pub likelihood: L,
    pub prior: P,
    pub y: Vec<T>,
    pub alpha: T,
    pub samples: usize,
}

/// Per-evaluation pieces of the JS-α objective.
#[derive(Debug, Clone, Copy)]
pub struct JsBreakdown<T> {
    pub js: T,
    pub kl: T,
    pub log_evidence: T,
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> JsVae<Q, L, P, T> {
    pub fn new(family: Q, likelihood: L, prior: P, y: Vec<T>, alpha: T, samples: usize) -> Result<Self> {
        check_alpha(alpha)?;
        check_samples(samples)?;
        check_dim("prior dimension", family.dim(), prior.dim())?;
        if likelihood.num_params() != 0 {
            return Err(Error::Parameter {
                name: "likelihood",
                reason: "JS objective needs a fixed likelihood".into(),
            });
        }
        Ok(Self {
            family,
            likelihood,
            prior,
            y,
            alpha,
            samples,
        })
    }

    fn pieces<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<(Loss<R, T>, JsBreakdown<R>)> {
        let none: [R; 0] = [];
        let cond = cond_for(&self.family, &self.y)?;
        let d = self.family.dim();
        let s_n = self.samples;
        let mut lq = Vec::with_capacity(s_n);
        let mut lpt = Vec::with_capacity(s_n);
        for s in 0..s_n {
            let eps = noise.substream(s as u64).normals(d);
            let (z, log_q) = self.family.sample_with(params, &eps, cond)?;
            let lp = self.likelihood.log_likelihood_with(&none, &z, &self.y)? + self.prior.log_density_with(&z);
            if !lp.value().is_finite() {
                return Err(Error::SupportViolation("sample outside prior support".into()));
            }
            lq.push(log_q);
            lpt.push(lp);
        }
        let log_w: Vec<R> = lpt.iter().zip(&lq).map(|(&p, &q)| p - q).collect();
        let lse = log_sum_exp_with(&log_w);
        let log_z = lse - T::of_usize(s_n).ln();
        let a = self.alpha;
        let one = T::one();
        let mut js_terms = Vec::with_capacity(s_n);
        let mut kl_terms = Vec::with_capacity(s_n);
        let mut per_sample = Vec::with_capacity(s_n);
        for s in 0..s_n {
            let lp = lpt[s] - log_z;
            let lm = if a == one {
                lp
            } else {
                log_sum_exp_with(&[lq[s] + (one - a).ln(), lp + a.ln()])
            };
            let fwd = lq[s] - lm;
            let mut js = fwd * a;
            if a != one {
                let w = (log_w[s] - lse).exp();
                js = js + w * (lp - lm) * (T::of_usize(s_n) * (one - a));
            }
            let kl = lq[s] - lpt[s];
            per_sample.push(js / a + kl);
            js_terms.push(js);
            kl_terms.push(kl);
        }
        let n = T::of_usize(s_n);
        let js = R::sum(&js_terms) / n;
        let kl = R::sum(&kl_terms) / n;
        let loss = mc_mean(&per_sample);
        Ok((
            Loss {
                value: js / a + kl,
                std_error: loss.std_error,
            },
            JsBreakdown {
                js,
                kl,
                log_evidence: log_z,
            },
        ))
    }

    /// The JS term, the KL term (without `log p(y)`), and the evidence estimate.
    pub fn breakdown(&self, params: &[T], noise: &RandomStream) -> Result<JsBreakdown<T>> {
        Ok(self.pieces(params, noise)?.1)
    }
}

impl<T: Scalar, Q: VariationalFamily<T>, L: Likelihood<T>, P: Prior<T>> Objective<T> for JsVae<Q, L, P, T> {
    fn name(&self) -> &'static str {
        "js_vae"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new().with("phi", self.family.num_params())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.family.init_params(rng)
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        Ok(self.pieces(params, noise)?.0)
    }
}
