//! Objective registry: builds every named objective from an experiment config.

use serde_json::{json, Value};

use varphys::autodiff::Real;
use varphys::linalg::{cholesky, solve_lower, solve_lower_transpose};
use varphys::models::{Activation, AmortizedGaussian, Checkpoint, ForwardModel, LinearMap, Mlp, MlpMap, MlpShape, ParamLayout};
use varphys::objectives::{
    BayesVi, DataFreeElbo, DataFreeRkl, DgpPoint, DgpVi, DynObjective, Elbo, ForwardKl, FrozenMlp, GaussianLikelihood, JsVae,
    Loss, MeanFieldSmallData, Objective, ResidualModel, SurrogateFlow, Vae, VirtualObservable,
};
use varphys::prob::{CovarianceKind, FlowStack, Gaussian, GaussianVariational, Preconditioned, Prior, RandomStream, VariationalFamily};
use varphys::train::{check_gradient, GradCheckOptions};

use crate::config::{ExperimentConfig, ModelConfig, ObjectiveConfig};
use crate::error::{CliError, CliResult};
use crate::family::{sample_moments, AnyFamily};
use crate::problem::{isotropic_noise, linear_map, observed_data, streams, AnyPrior, Problem};

/// Registered objective names, sorted.
pub const REGISTRY: [&str; 11] = [
    "bayes_vi",
    "data_free_elbo",
    "data_free_rkl",
    "dgp_point",
    "dgp_vi",
    "elbo",
    "forward_kl",
    "js_vae",
    "small_data",
    "surrogate_flow",
    "vae",
];

const DEFAULT_SAMPLES: usize = 16;

type Summary = Box<dyn Fn(&[f64]) -> CliResult<Value>>;

/// A training objective, its high-sample evaluator, and a summary of trained parameters.
pub struct Built {
    pub name: &'static str,
    pub objective: Box<dyn DynObjective<f64>>,
    pub evaluator: Box<dyn DynObjective<f64>>,
    pub summary: Summary,
}

pub fn build(cfg: &ExperimentConfig) -> CliResult<Built> {
    let o = ExperimentConfig::require(&cfg.objective, "objective")?;
    let Some(name) = REGISTRY.iter().copied().find(|n| *n == o.name) else {
        return Err(CliError::config(
            "objective.name",
            format!("unknown objective `{}`; registry: {}", o.name, REGISTRY.join(", ")),
        ));
    };
    match name {
        "bayes_vi" => bayes_vi(cfg, o),
        "elbo" => elbo(cfg, o),
        "js_vae" => js_vae(cfg, o),
        "vae" => vae(cfg, o),
        "forward_kl" => forward_kl(cfg, o),
        "surrogate_flow" => surrogate_flow(cfg, o),
        "data_free_rkl" => data_free_rkl(cfg, o),
        "data_free_elbo" => data_free_elbo(cfg, o),
        "small_data" => small_data(cfg, o),
        "dgp_point" => dgp_point(cfg, o),
        "dgp_vi" => dgp_vi(cfg, o),
        _ => unreachable!("registry entry without a builder"),
    }
}

fn samples(o: &ObjectiveConfig) -> usize {
    o.samples.unwrap_or(DEFAULT_SAMPLES)
}

fn assemble<O: Objective<f64> + 'static>(
    name: &'static str,
    make: impl Fn(usize) -> CliResult<O>,
    o: &ObjectiveConfig,
    summary: Summary,
) -> CliResult<Built> {
    Ok(Built {
        name,
        objective: Box::new(make(samples(o))?),
        evaluator: Box::new(make(o.eval_samples)?),
        summary,
    })
}

fn setup(path: &'static str) -> impl Fn(varphys::Error) -> CliError {
    move |e| CliError::setup(path, e)
}

fn model_block(cfg: &ExperimentConfig) -> CliResult<&ModelConfig> {
    ExperimentConfig::require(&cfg.model, "model")
}

fn prior_block(cfg: &ExperimentConfig) -> CliResult<&crate::config::PriorConfig> {
    ExperimentConfig::require(&cfg.prior, "prior")
}

fn moments_json(mean: &[f64], cov: &[f64]) -> Value {
    json!({ "mean": mean, "covariance": cov })
}

/// `y = A z + ε` with a prior on `z`.
struct LinearGaussian {
    map: LinearMap<f64>,
    sigma: f64,
    y: Vec<f64>,
    prior: AnyPrior,
}

fn linear_gaussian(cfg: &ExperimentConfig, needs_y: bool) -> CliResult<LinearGaussian> {
    let obs = ExperimentConfig::require(&cfg.observation, "observation")?;
    let d = match (&obs.matrix, &obs.y, &obs.truth) {
        (Some(m), _, _) => m[0].len(),
        (None, Some(y), _) => y.len(),
        (None, None, Some(t)) => t.len(),
        (None, None, None) => match prior_block(cfg)? {
            _ if needs_y => return Err(CliError::config("observation", "one of `y`, `file`, `truth` is required")),
            _ => obs.sensors.as_ref().map_or(1, Vec::len),
        },
    };
    let map = linear_map(obs.matrix.as_ref(), d)?;
    let prior = AnyPrior::from_config(prior_block(cfg)?, map.cols())?;
    let y = if needs_y {
        let y = observed_data(obs, cfg.seed, |t| map.apply(&[], t).map_err(setup("observation.truth")))?;
        if y.len() != map.rows() {
            return Err(CliError::config("observation.y", format!("expected {} values, got {}", map.rows(), y.len())));
        }
        y
    } else {
        Vec::new()
    };
    Ok(LinearGaussian {
        map,
        sigma: obs.sigma,
        y,
        prior,
    })
}

impl LinearGaussian {
    fn likelihood(&self) -> CliResult<GaussianLikelihood<LinearMap<f64>, f64>> {
        GaussianLikelihood::isotropic(self.map.clone(), self.sigma).map_err(setup("observation"))
    }

    /// Exact posterior moments under a Gaussian prior.
    fn exact_posterior(&self, y: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let p = self.prior.as_gaussian()?;
        let (a, m, d) = (self.map.matrix(), self.map.rows(), self.map.cols());
        let s2 = self.sigma * self.sigma;
        let prior_cov = p.covariance();
        let prec_diag: Vec<f64> = (0..d).map(|i| 1.0 / prior_cov[i * d + i]).collect();
        let mut prec = vec![0.0; d * d];
        let mut rhs = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                prec[i * d + j] = (0..m).map(|k| a[k * d + i] * a[k * d + j]).sum::<f64>() / s2;
            }
            prec[i * d + i] += prec_diag[i];
            rhs[i] = (0..m).map(|k| a[k * d + i] * y[k]).sum::<f64>() / s2 + prec_diag[i] * p.mean()[i];
        }
        let l = cholesky(&prec, d).ok()?;
        let solve = |b: &[f64]| solve_lower_transpose(&l, d, &solve_lower(&l, d, b));
        let mean = solve(&rhs);
        let mut cov = vec![0.0; d * d];
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            for (i, v) in solve(&e).into_iter().enumerate() {
                cov[i * d + j] = v;
            }
        }
        Some((mean, cov))
    }
}

fn posterior_summary(lg: &LinearGaussian, family: &AnyFamily, params: &[f64], draws: usize, seed: u64) -> CliResult<Value> {
    let (mean, cov) = family.moments(params, draws, &RandomStream::new(seed, streams::SUMMARY))?;
    let mut v = json!({ "posterior": moments_json(&mean, &cov) });
    if let Some((m, c)) = lg.exact_posterior(&lg.y) {
        v["exact_posterior"] = moments_json(&m, &c);
    }
    Ok(v)
}

fn bayes_vi(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let lg = linear_gaussian(cfg, true)?;
    let family = AnyFamily::from_config(cfg.model.as_ref(), lg.map.cols())?;
    let lik = lg.likelihood()?;
    let make = |s| BayesVi::new(family.clone(), lik.clone(), lg.prior.clone(), lg.y.clone(), s).map_err(setup("objective"));
    let (f, draws, seed) = (family.clone(), o.eval_samples, cfg.seed);
    let built = assemble("bayes_vi", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| posterior_summary(&lg, &f, p, draws, seed)),
        ..built
    })
}

fn js_vae(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let alpha = o.need(o.alpha, "alpha")?;
    let lg = linear_gaussian(cfg, true)?;
    let family = AnyFamily::from_config(cfg.model.as_ref(), lg.map.cols())?;
    let lik = lg.likelihood()?;
    let make =
        |s| JsVae::new(family.clone(), lik.clone(), lg.prior.clone(), lg.y.clone(), alpha, s).map_err(setup("objective"));
    let evaluator = make(o.eval_samples)?;
    let (f, draws, seed) = (family.clone(), o.eval_samples, cfg.seed);
    let built = assemble("js_vae", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| {
            let mut v = posterior_summary(&lg, &f, p, draws, seed)?;
            let b = evaluator.breakdown(p, &RandomStream::new(seed, streams::SUMMARY))?;
            v["js"] = json!(b.js);
            v["kl_without_evidence"] = json!(b.kl);
            v["log_evidence_estimate"] = json!(b.log_evidence);
            Ok(v)
        }),
        ..built
    })
}

fn decoder(m: &ModelConfig, latent: usize, out: usize, sigma: f64) -> CliResult<GaussianLikelihood<MlpMap, f64>> {
    let hidden = m.decoder_hidden.clone().unwrap_or_else(|| m.hidden.clone());
    let shape = MlpShape::dense(latent, &hidden, out, Activation::Tanh).map_err(setup("model.decoder_hidden"))?;
    GaussianLikelihood::isotropic(MlpMap { shape }, sigma).map_err(setup("observation.sigma"))
}

fn latent_dim(m: &ModelConfig) -> CliResult<usize> {
    match m.latent_dim {
        Some(0) | None => Err(CliError::config("model.latent_dim", "a positive latent dimension is required")),
        Some(k) => Ok(k),
    }
}

fn elbo(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let obs = ExperimentConfig::require(&cfg.observation, "observation")?;
    let y = observed_data(obs, cfg.seed, |_| Err(CliError::config("observation.truth", "`elbo` has no fixed forward map")))?;
    let m = model_block(cfg)?;
    let k = latent_dim(m)?;
    let family = AnyFamily::from_config(Some(m), k)?;
    let dec = decoder(m, k, y.len(), obs.sigma)?;
    let prior = AnyPrior::from_config(prior_block(cfg)?, k)?;
    let make = |s| Elbo::new(family.clone(), dec.clone(), prior.clone(), y.clone(), s).map_err(setup("objective"));
    let evaluator = make(o.eval_samples)?;
    let (f, draws, seed) = (family.clone(), o.eval_samples, cfg.seed);
    let built = assemble("elbo", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| {
            let noise = RandomStream::new(seed, streams::SUMMARY);
            let (elbo, se) = evaluator.estimate(p, &noise)?;
            let nphi = VariationalFamily::<f64>::num_params(&f);
            let (mean, cov) = f.moments(&p[..nphi], draws, &noise)?;
            Ok(json!({ "elbo": elbo, "elbo_std_error": se, "latent_posterior": moments_json(&mean, &cov) }))
        }),
        ..built
    })
}

/// A VAE that draws a fresh mini-batch (without replacement) from each step's noise stream.
#[derive(Clone)]
struct MiniBatchVae<V> {
    vae: V,
    size: usize,
    len: usize,
}

type VaeOf = Vae<AmortizedGaussian, GaussianLikelihood<MlpMap, f64>, AnyPrior, f64>;

impl MiniBatchVae<VaeOf> {
    fn batch(&self, noise: &RandomStream) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len).collect();
        let mut g = noise.substream(u64::MAX).generator();
        for i in 0..self.size {
            let j = i + g.index(self.len - i);
            idx.swap(i, j);
        }
        idx.truncate(self.size);
        idx
    }
}

impl Objective<f64> for MiniBatchVae<VaeOf> {
    fn name(&self) -> &'static str {
        "vae"
    }

    fn layout(&self) -> ParamLayout {
        self.vae.layout()
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<f64> {
        self.vae.init_params(rng)
    }

    fn loss_with<R: Real<f64>>(&self, params: &[R], noise: &RandomStream) -> varphys::Result<Loss<R, f64>> {
        if self.size >= self.len {
            return self.vae.loss_with(params, noise);
        }
        let v = self.vae.clone().with_batch(self.batch(noise))?;
        v.loss_with(params, noise)
    }
}

fn vae(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let obs = ExperimentConfig::require(&cfg.observation, "observation")?;
    let data = ExperimentConfig::require(&obs.dataset, "observation.dataset")?.clone();
    let m = model_block(cfg)?;
    let k = latent_dim(m)?;
    let dim = data[0].len();
    let encoder = AmortizedGaussian::new(k, dim, &m.hidden, CovarianceKind::Diagonal).map_err(setup("model.hidden"))?;
    let dec = decoder(m, k, dim, obs.sigma)?;
    let prior = AnyPrior::from_config(prior_block(cfg)?, k)?;
    let len = data.len();
    let size = o.batch_size.unwrap_or(len).min(len);
    let make = |s| -> CliResult<MiniBatchVae<VaeOf>> {
        let vae = Vae::new(encoder.clone(), dec.clone(), prior.clone(), data.clone(), s).map_err(setup("objective"))?;
        Ok(MiniBatchVae { vae, size, len })
    };
    let full = make(o.eval_samples)?.vae;
    let seed = cfg.seed;
    let built = assemble("vae", make, o, Box::new(|_| Ok(Value::Null)))?;
    let built = Built {
        evaluator: Box::new(full.clone()),
        ..built
    };
    Ok(Built {
        summary: Box::new(move |p| {
            let noise = RandomStream::new(seed, streams::SUMMARY);
            let per: Vec<f64> = (0..len).map(|n| full.datum_elbo(p, n, &noise).map(|e| e.0)).collect::<varphys::Result<_>>()?;
            let total: f64 = per.iter().sum();
            Ok(json!({ "datum_elbo": per, "total_elbo": total }))
        }),
        ..built
    })
}

fn conditional_flow(m: &ModelConfig, dim: usize, cond: usize) -> CliResult<FlowStack<f64>> {
    FlowStack::new(dim, cond, m.couplings, &m.hidden).map_err(setup("model"))
}

fn flow_moments(flow: &FlowStack<f64>, params: &[f64], cond: &[f64], draws: usize, seed: u64) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let stream = RandomStream::new(seed, streams::SUMMARY);
    let samples = (0..draws)
        .map(|s| Ok(flow.sample(params, &stream.substream(s as u64).normals(flow.dim()), cond)?.0))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(sample_moments(&samples))
}

fn conditions(o: &ObjectiveConfig, dim: usize) -> CliResult<Vec<Vec<f64>>> {
    let c = o.conditions.clone().unwrap_or_default();
    if let Some(i) = c.iter().position(|v| v.len() != dim) {
        return Err(CliError::config(format!("objective.conditions[{i}]"), format!("expected {dim} values")));
    }
    Ok(c)
}

fn forward_kl(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let lg = linear_gaussian(cfg, false)?;
    let (d, m_out) = (lg.map.cols(), lg.map.rows());
    let flow = conditional_flow(model_block(cfg)?, d, m_out)?;
    let noise = isotropic_noise(lg.sigma, m_out)?;
    let conds = conditions(o, m_out)?;
    let pairs = o.pairs.unwrap_or(samples(o));
    let make = |s: usize| {
        let s = if s == samples(o) { pairs } else { s };
        ForwardKl::new(flow.clone(), lg.map.clone(), noise.clone(), lg.prior.clone(), s).map_err(setup("objective"))
    };
    let (draws, seed) = (o.eval_samples, cfg.seed);
    let built = assemble("forward_kl", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| {
            let mut rows = Vec::new();
            for c in &conds {
                let (mean, cov) = flow_moments(&flow, p, c, draws, seed)?;
                let mut row = json!({ "condition": c, "posterior": moments_json(&mean, &cov) });
                if let Some((em, ec)) = lg.exact_posterior(c) {
                    row["exact_posterior"] = moments_json(&em, &ec);
                }
                rows.push(row);
            }
            Ok(json!({ "conditions": rows }))
        }),
        ..built
    })
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

fn test_draws(prior: &AnyPrior, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut g = RandomStream::new(seed, streams::TEST_DRAWS).generator();
    (0..count).map(|_| prior.sample(&mut g)).collect()
}

fn surrogate_flow(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let problem = Problem::from_experiment(cfg)?;
    let model = problem.residual_model()?;
    let prior = AnyPrior::for_problem(prior_block(cfg)?, &problem)?;
    let obs_cfg = ExperimentConfig::require(&cfg.observation, "observation")?;
    let obs = problem.observation_model(obs_cfg)?;
    let h = problem.observation_matrix(&obs)?;
    let m = model_block(cfg)?;
    let (zd, ud, md) = (problem.z_dim(), problem.u_dim(), obs.dim());
    let surrogate = MlpMap {
        shape: MlpShape::dense(zd, &m.hidden, ud, Activation::Tanh).map_err(setup("model.hidden"))?,
    };
    let flow = conditional_flow(m, zd, md)?;
    let noise = isotropic_noise(obs_cfg.sigma, md)?;
    let mut g = RandomStream::new(cfg.seed, streams::TRAIN_PAIRS).generator();
    let data = (0..o.train_pairs.unwrap_or(64))
        .map(|_| {
            let z = prior.sample(&mut g);
            Ok((z.clone(), model.solve(&z)?))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let pairs = o.pairs.unwrap_or(samples(o));
    let make = |s: usize| {
        let s = if s == samples(o) { pairs } else { s };
        SurrogateFlow::new(surrogate.clone(), h.clone(), flow.clone(), noise.clone(), prior.clone(), data.clone(), s)
            .map_err(setup("objective"))
    };
    let conds = conditions(o, md)?;
    let tests = test_draws(&prior, o.test_draws, cfg.seed);
    let (draws, seed) = (o.eval_samples, cfg.seed);
    let built = assemble("surrogate_flow", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| {
            let (theta, phi) = p.split_at(ForwardModel::<f64>::num_params(&surrogate));
            let errors = tests
                .iter()
                .map(|z| Ok(rel_l2(&surrogate.apply(theta, z)?, &model.solve(z)?)))
                .collect::<CliResult<Vec<f64>>>()?;
            let mut rows = Vec::new();
            for c in &conds {
                let (mean, cov) = flow_moments(&flow, phi, c, draws, seed)?;
                rows.push(json!({ "condition": c, "posterior": moments_json(&mean, &cov) }));
            }
            Ok(json!({ "surrogate_rel_l2": errors, "conditions": rows }))
        }),
        ..built
    })
}

type Amortized = Preconditioned<AmortizedGaussian, f64>;

/// Amortized `q(u | z)` over trial vectors, optionally preconditioned by the
/// reference stiffness at the prior centre.
fn trial_family(model: &ResidualModel<f64>, m: &ModelConfig, prior: &AnyPrior) -> CliResult<Amortized> {
    let inner = AmortizedGaussian::new(model.u_dim(), model.z_dim(), &m.hidden, CovarianceKind::Diagonal)
        .map_err(setup("model.hidden"))?;
    let n = model.u_dim();
    let (lower, shift) = if m.precondition {
        model.reference_affine(&prior.centre()).map_err(setup("model.precondition"))?
    } else {
        let mut eye = vec![0.0; n * n];
        for i in 0..n {
            eye[i * n + i] = 1.0;
        }
        (eye, vec![0.0; n])
    };
    Preconditioned::new(inner, lower, shift).map_err(setup("model"))
}

fn forward_mean(q: &Amortized, params: &[f64], z: &[f64]) -> CliResult<Vec<f64>> {
    let m = q.inner.moments_const_with(params, z)?;
    Ok(q.apply_with(&m.mean))
}

fn data_free_rkl(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let beta = o.need(o.beta, "beta")?;
    let problem = Problem::from_experiment(cfg)?;
    let model = problem.residual_model()?;
    let prior = AnyPrior::for_problem(prior_block(cfg)?, &problem)?;
    let q = trial_family(&model, model_block(cfg)?, &prior)?;
    let make = |s| DataFreeRkl::new(model.clone(), q.clone(), prior.clone(), beta, s).map_err(setup("objective"));
    let evaluator = make(o.eval_samples)?;
    let tests = test_draws(&prior, o.test_draws, cfg.seed);
    let seed = cfg.seed;
    let built = assemble("data_free_rkl", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| {
            let mut rows = Vec::new();
            for z in &tests {
                let fem = model.solve(z)?;
                rows.push(json!({ "z": problem.to_physical(z), "forward_rel_l2": rel_l2(&forward_mean(&q, p, z)?, &fem) }));
            }
            let r = evaluator.mean_residual_norm(p, &RandomStream::new(seed, streams::SUMMARY))?;
            Ok(json!({ "draws": rows, "mean_residual_norm": r }))
        }),
        ..built
    })
}

fn data_free_elbo(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let sigma_r = o.need(o.sigma_r, "sigma_r")?;
    let problem = Problem::from_experiment(cfg)?;
    let model = problem.residual_model()?;
    let prior = AnyPrior::for_problem(prior_block(cfg)?, &problem)?;
    let m = model_block(cfg)?;
    let q = trial_family(&model, m, &prior)?;
    let inv_hidden = m.inverse_hidden.clone().unwrap_or_else(|| m.hidden.clone());
    let inverse = AmortizedGaussian::new(model.z_dim(), model.u_dim(), &inv_hidden, CovarianceKind::Diagonal)
        .map_err(setup("model.inverse_hidden"))?;
    let n = model.u_dim();
    let prior_u = Gaussian::diagonal(vec![0.0; n], &vec![m.trial_prior_std; n]).map_err(setup("model.trial_prior_std"))?;
    let vo = VirtualObservable::new(sigma_r).map_err(setup("objective.sigma_r"))?;
    let make = |s| {
        DataFreeElbo::new(model.clone(), q.clone(), inverse.clone(), prior_u.clone(), prior.clone(), vo, s)
            .map_err(setup("objective"))
    };
    let evaluator = make(o.eval_samples)?;
    let tests = test_draws(&prior, o.test_draws, cfg.seed);
    let built = assemble("data_free_elbo", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| {
            let nphi = VariationalFamily::<f64>::num_params(&q);
            let mut rows = Vec::new();
            for z in &tests {
                let fem = model.solve(z)?;
                let zt = problem.to_physical(z);
                let zhat = problem.to_physical(evaluator.inverse_moments(p, &fem)?.mean());
                rows.push(json!({
                    "z": zt,
                    "forward_rel_l2": rel_l2(&forward_mean(&q, &p[..nphi], z)?, &fem),
                    "inverse_mean": zhat,
                    "inverse_rel_l2": rel_l2(&zhat, &zt),
                }));
            }
            Ok(json!({ "draws": rows }))
        }),
        ..built
    })
}

fn pde_data(cfg: &ExperimentConfig, problem: &Problem) -> CliResult<(varphys::pde::ObservationModel<f64>, Vec<f64>)> {
    let obs_cfg = ExperimentConfig::require(&cfg.observation, "observation")?;
    let obs = problem.observation_model(obs_cfg)?;
    let y = observed_data(obs_cfg, cfg.seed, |truth| {
        problem.check_coefficients("observation.truth", truth)?;
        let u = problem.solve(truth)?;
        Ok(varphys::pde::observe(&u, &obs, None)?)
    })?;
    if y.len() != obs.dim() {
        return Err(CliError::config("observation.y", format!("expected {} values, got {}", obs.dim(), y.len())));
    }
    Ok((obs, y))
}

fn small_data(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let sigma_r = o.need(o.sigma_r, "sigma_r")?;
    let problem = Problem::from_experiment(cfg)?;
    let model = problem.residual_model()?;
    let prior_z = AnyPrior::for_problem(prior_block(cfg)?, &problem)?;
    // a Gaussian q(z) puts mass outside any bounded support
    if !matches!(prior_z, AnyPrior::Gaussian(_)) {
        return Err(CliError::config("prior.kind", "small_data needs a gaussian prior on z"));
    }
    let (obs, y) = pde_data(cfg, &problem)?;
    let std_u = cfg.model.as_ref().map_or(1.0, |m| m.trial_prior_std);
    let n = model.u_dim();
    let prior_u = Gaussian::diagonal(vec![0.0; n], &vec![std_u; n]).map_err(setup("model.trial_prior_std"))?;
    let q_u = GaussianVariational::diagonal(n).map_err(setup("model"))?;
    let q_z = GaussianVariational::diagonal(model.z_dim()).map_err(setup("model"))?;
    let vo = VirtualObservable::new(sigma_r).map_err(setup("objective.sigma_r"))?;
    let make = |s| {
        MeanFieldSmallData::small_data(
            model.clone(),
            q_u,
            q_z,
            obs.clone(),
            vo,
            prior_u.clone(),
            prior_z.clone(),
            y.clone(),
            s,
        )
        .map_err(setup("objective"))
    };
    let built = assemble("small_data", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| {
            let nu = VariationalFamily::<f64>::num_params(&q_u);
            let gu = q_u.distribution(&p[..nu])?;
            let gz = q_z.distribution(&p[nu..])?;
            Ok(json!({
                "u": moments_json(gu.mean(), &gu.covariance()),
                "z_latent": moments_json(gz.mean(), &gz.covariance()),
                "z_at_mean": problem.to_physical(gz.mean()),
            }))
        }),
        ..built
    })
}

fn generator(cfg: &ExperimentConfig, problem: &Problem) -> CliResult<FrozenMlp<f64>> {
    let m = model_block(cfg)?;
    let g = ExperimentConfig::require(&m.generator, "model.generator")?;
    let shape = MlpShape::dense(g.latent_dim, &g.hidden, problem.z_dim(), Activation::Tanh).map_err(setup("model.generator"))?;
    let net = match &g.checkpoint {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::config("model.generator.checkpoint", format!("cannot read {}: {e}", path.display())))?;
            let net = Mlp::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)
                .map_err(|e| CliError::config("model.generator.checkpoint", e.to_string()))?;
            if net.shape() != &shape {
                return Err(CliError::config("model.generator.checkpoint", "network shape differs from the generator block"));
            }
            net
        }
        None => Mlp::init(shape, &RandomStream::new(cfg.seed, streams::GENERATOR)),
    };
    Ok(FrozenMlp { net })
}

fn dgp_point(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let beta = o.need(o.beta, "beta")?;
    let mu_chi = o.need(o.mu_chi, "mu_chi")?;
    let problem = Problem::from_experiment(cfg)?;
    let gen = generator(cfg, &problem)?;
    let (obs, y) = pde_data(cfg, &problem)?;
    let forward = problem.poisson_map(Some(obs))?;
    let obj = DgpPoint::new(gen, forward, y, beta, mu_chi).map_err(setup("objective"))?;
    let view = obj.clone();
    Ok(Built {
        name: "dgp_point",
        objective: Box::new(obj.clone()),
        evaluator: Box::new(obj),
        summary: Box::new(move |w| {
            let field = view.field(w)?;
            let pred = view.forward.apply(&[], &field)?;
            let misfit: f64 = pred.iter().zip(&view.y).map(|(a, b)| (a - b).powi(2)).sum();
            Ok(json!({ "z": problem.to_physical(&field), "data_misfit": misfit, "latent_norm": w.iter().map(|v| v * v).sum::<f64>().sqrt() }))
        }),
    })
}

fn dgp_vi(cfg: &ExperimentConfig, o: &ObjectiveConfig) -> CliResult<Built> {
    let problem = Problem::from_experiment(cfg)?;
    let gen = generator(cfg, &problem)?;
    let k = gen.net.shape().input_dim();
    let family = AnyFamily::from_config(cfg.model.as_ref(), k)?;
    let (obs, y) = pde_data(cfg, &problem)?;
    let noise = isotropic_noise(obs.noise().matrix()[0].sqrt(), obs.dim())?;
    let forward = problem.poisson_map(Some(obs))?;
    let make = |s| DgpVi::new(family.clone(), gen.clone(), forward.clone(), noise.clone(), y.clone(), s).map_err(setup("objective"));
    let view = make(1)?;
    let (draws, seed) = (o.eval_samples, cfg.seed);
    let built = assemble("dgp_vi", make, o, Box::new(|_| Ok(Value::Null)))?;
    Ok(Built {
        summary: Box::new(move |p| {
            let fields = view.push_forward(p, &RandomStream::new(seed, streams::SUMMARY), draws)?;
            let physical: Vec<Vec<f64>> = fields.iter().map(|f| problem.to_physical(f)).collect();
            let (mean, cov) = sample_moments(&physical);
            Ok(json!({ "z": moments_json(&mean, &cov) }))
        }),
        ..built
    })
}

/// Finite-difference gradient checks at the initial point and `extra` perturbations of it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSuite {
    pub points: usize,
    pub max_rel_error: f64,
    /// Point, coordinate, tape and finite-difference entries of the worst mismatch.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub passed: bool,
}

pub fn gradient_suite(objective: &dyn DynObjective<f64>, seed: u64, extra: usize) -> CliResult<GradientSuite> {
    let opts = GradCheckOptions::default();
    let base = objective.initial_params(&RandomStream::new(seed, streams::INIT));
    let noise = RandomStream::new(seed, streams::GRADCHECK);
    let mut worst = 0.0f64;
    let mut at = None;
    let mut passed = true;
    for k in 0..=extra {
        let x: Vec<f64> = if k == 0 {
            base.clone()
        } else {
            let eps = noise.substream(k as u64).normals::<f64>(base.len());
            base.iter().zip(eps).map(|(b, e)| b + 0.1 * e).collect()
        };
        let r = check_gradient(objective, &x, &noise.substream(0), &opts)?;
        if let Some(i) = r.worst_index {
            if r.max_rel_error >= worst {
                worst = r.max_rel_error;
                at = Some((k, i, r.analytic[i], r.numeric[i]));
            }
        }
        passed &= r.passed;
    }
    Ok(GradientSuite {
        points: extra + 1,
        max_rel_error: worst,
        worst: at,
        passed,
    })
}
