//! Experiment configuration (JSON). Unknown keys are rejected and every
//! validation error names the offending field path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    /// Coefficients of `z` in the parameter basis (physical values), for `solve`.
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub observation: Option<ObservationConfig>,
    #[serde(default)]
    pub prior: Option<PriorConfig>,
    #[serde(default)]
    pub objective: Option<ObjectiveConfig>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub inversion: Option<InversionConfig>,
}

fn unit_domain() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "unit_domain")]
    pub domain: [f64; 2],
    /// Number of elements.
    pub mesh_size: usize,
    pub parameter_basis: BasisConfig,
    pub source: SourceConfig,
    /// Optimize and sample `ln z` instead of `z`.
    #[serde(default)]
    pub log_params: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisConfig {
    PiecewiseConstant { cells: usize },
    PerElement,
    Hat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Constant { value: f64 },
    /// `amplitude · sin(frequency · π · x)`.
    Sine { amplitude: f64, frequency: f64 },
    /// Nodal values on the mesh, interpolated by hat functions.
    Nodal { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Noise standard deviation.
    pub sigma: f64,
    /// Sensor locations for PDE problems; defaults to the interior nodes.
    #[serde(default)]
    pub sensors: Option<Vec<f64>>,
    /// Row-major forward matrix for linear-Gaussian models; defaults to the identity.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    /// CSV file with a `y` column.
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Synthesize `y` from these true coefficients (physical values).
    #[serde(default)]
    pub truth: Option<Vec<f64>>,
    /// Add `N(0, σ²)` noise to synthesized data.
    #[serde(default)]
    pub noisy: bool,
    /// Observation vectors for dataset objectives (`vae`).
    #[serde(default)]
    pub dataset: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    Gaussian {
        #[serde(default)]
        mean: f64,
        std: f64,
    },
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

fn eval_samples() -> usize {
    4096
}

fn test_draws() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub name: String,
    /// Monte Carlo samples per step.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub sigma_r: Option<f64>,
    #[serde(default)]
    pub mu_chi: Option<f64>,
    /// Mini-batch size for dataset objectives; the full dataset when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Simulated (z, y) pairs per step for amortized objectives.
    #[serde(default)]
    pub pairs: Option<usize>,
    /// Solver runs used as regression data by `surrogate_flow`.
    #[serde(default)]
    pub train_pairs: Option<usize>,
    /// Conditioning vectors at which amortized posteriors are summarized.
    #[serde(default)]
    pub conditions: Option<Vec<Vec<f64>>>,
    #[serde(default = "eval_samples")]
    pub eval_samples: usize,
    /// Fresh prior draws used to score surrogates.
    #[serde(default = "test_draws")]
    pub test_draws: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    GaussianDiag,
    GaussianFull,
    Flow,
}

fn default_family() -> FamilyKind {
    FamilyKind::GaussianDiag
}

fn default_couplings() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_family")]
    pub family: FamilyKind,
    /// Hidden widths of the main network (flow conditioners, encoders, surrogates).
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "default_couplings")]
    pub couplings: usize,
    #[serde(default)]
    pub inverse_hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub decoder_hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub latent_dim: Option<usize>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    /// Push amortized trial densities through the reference-stiffness preconditioner.
    #[serde(default = "yes")]
    pub precondition: bool,
    /// Standard deviation of the `N(0, s² I)` prior on trial vectors.
    #[serde(default = "one")]
    pub trial_prior_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Trained generator weights; random weights from the seed when absent.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKindConfig {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    Constant,
    Cosine { min_lr: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKindConfig,
    pub lr: f64,
    pub steps: usize,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default = "yes")]
    pub resample_noise: bool,
    #[serde(default)]
    pub eval_every: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMethod {
    Tikhonov,
    Physics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Fem,
    Pinn,
}

fn fem() -> TrialKind {
    TrialKind::Fem
}

fn max_iters() -> usize {
    500
}

fn gtol() -> f64 {
    1e-8
}

fn memory() -> usize {
    10
}

fn pinn_hidden() -> Vec<usize> {
    vec![16, 16]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub method: InversionMethod,
    pub beta: f64,
    /// Also solve for each of these β and write one summary row per value.
    #[serde(default)]
    pub beta_sweep: Option<Vec<f64>>,
    /// Initial coefficients (physical); all ones when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default = "fem")]
    pub trial: TrialKind,
    #[serde(default)]
    pub alternating: bool,
    #[serde(default = "max_iters")]
    pub max_iters: usize,
    #[serde(default = "gtol")]
    pub gtol: f64,
    #[serde(default = "memory")]
    pub memory: usize,
    #[serde(default = "pinn_hidden")]
    pub pinn_hidden: Vec<usize>,
    /// Collocation points for PINN trial fields.
    #[serde(default)]
    pub collocation: Option<Vec<f64>>,
}

/// A parsed config together with its raw bytes (hashed into manifests).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: Vec<u8>,
    pub path: PathBuf,
}

pub fn parse(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        CliError::config(path, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let raw = std::fs::read(path).map_err(|e| CliError::config("", format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&raw).map_err(|_| CliError::config("", "config is not UTF-8"))?;
    Ok(LoadedConfig {
        config: parse(text)?,
        raw,
        path: path.to_path_buf(),
    })
}

fn positive(path: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be positive and finite, got {v}")))
    }
}

fn finite_all(path: &str, xs: &[f64]) -> CliResult<()> {
    match xs.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CliError::config(format!("{path}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    /// Structural checks that need no numerical objects.
    pub fn validate(&self) -> CliResult<()> {
        if let Some(p) = &self.problem {
            let [a, b] = p.domain;
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(CliError::config("problem.domain", "need finite a < b"));
            }
            if p.mesh_size < 2 {
                return Err(CliError::config(
                    "problem.mesh_size",
                    format!("need at least 2 elements (one interior node), got {}", p.mesh_size),
                ));
            }
            match &p.parameter_basis {
                BasisConfig::PiecewiseConstant { cells } if *cells == 0 || p.mesh_size % cells != 0 => {
                    return Err(CliError::config(
                        "problem.parameter_basis.cells",
                        format!("must divide mesh_size = {}", p.mesh_size),
                    ));
                }
                _ => {}
            }
            match &p.source {
                SourceConfig::Constant { value } => finite_all("problem.source.value", &[*value])?,
                SourceConfig::Sine { amplitude, frequency } => finite_all("problem.source", &[*amplitude, *frequency])?,
                SourceConfig::Nodal { values } => {
                    if values.len() != p.mesh_size + 1 {
                        return Err(CliError::config(
                            "problem.source.values",
                            format!("expected {} nodal values, got {}", p.mesh_size + 1, values.len()),
                        ));
                    }
                    finite_all("problem.source.values", values)?;
                }
            }
        }
        if let Some(z) = &self.coefficients {
            finite_all("coefficients", z)?;
        }
        if let Some(o) = &self.observation {
            positive("observation.sigma", o.sigma)?;
            let given = [o.y.is_some(), o.file.is_some(), o.truth.is_some()].iter().filter(|&&b| b).count();
            if given > 1 {
                return Err(CliError::config("observation", "give at most one of `y`, `file`, `truth`"));
            }
            if let Some(m) = &o.matrix {
                let cols = m.first().map_or(0, Vec::len);
                if cols == 0 || m.iter().any(|r| r.len() != cols) {
                    return Err(CliError::config("observation.matrix", "rows must be non-empty and of equal length"));
                }
            }
            if let Some(d) = &o.dataset {
                let m = d.first().map_or(0, Vec::len);
                if m == 0 || d.iter().any(|r| r.len() != m) {
                    return Err(CliError::config("observation.dataset", "rows must be non-empty and of equal length"));
                }
            }
        }
        if let Some(p) = &self.prior {
            match *p {
                PriorConfig::Gaussian { mean, std } => {
                    finite_all("prior.mean", &[mean])?;
                    positive("prior.std", std)?;
                }
                PriorConfig::Uniform { lo, hi } | PriorConfig::LogUniform { lo, hi } => {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(CliError::config("prior", "need finite lo < hi"));
                    }
                    if matches!(p, PriorConfig::LogUniform { .. }) {
                        positive("prior.lo", lo)?;
                    }
                }
            }
        }
        if let Some(o) = &self.objective {
            for (name, v) in [("beta", o.beta), ("sigma_r", o.sigma_r)] {
                if let Some(v) = v {
                    positive(&format!("objective.{name}"), v)?;
                }
            }
            if let Some(a) = o.alpha {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(CliError::config("objective.alpha", format!("must lie in (0, 1], got {a}")));
                }
            }
            for (name, v) in [("samples", o.samples), ("batch_size", o.batch_size), ("pairs", o.pairs), ("train_pairs", o.train_pairs)] {
                if v == Some(0) {
                    return Err(CliError::config(format!("objective.{name}"), "must be at least 1"));
                }
            }
            if o.eval_samples == 0 {
                return Err(CliError::config("objective.eval_samples", "must be at least 1"));
            }
        }
        if let Some(m) = &self.model {
            positive("model.trial_prior_std", m.trial_prior_std)?;
        }
        if let Some(o) = &self.optimizer {
            positive("optimizer.lr", o.lr)?;
            if let Some(ScheduleConfig::Cosine { min_lr }) = &o.schedule {
                if !(*min_lr >= 0.0 && *min_lr <= o.lr) {
                    return Err(CliError::config("optimizer.schedule.min_lr", "must lie in [0, lr]"));
                }
            }
            if o.eval_every == Some(0) {
                return Err(CliError::config("optimizer.eval_every", "must be at least 1"));
            }
        }
        if let Some(i) = &self.inversion {
            if !(i.beta >= 0.0 && i.beta.is_finite()) {
                return Err(CliError::config("inversion.beta", "must be non-negative and finite"));
            }
            if let Some(s) = &i.beta_sweep {
                if let Some(k) = s.iter().position(|b| !(*b >= 0.0 && b.is_finite())) {
                    return Err(CliError::config(format!("inversion.beta_sweep[{k}]"), "must be non-negative and finite"));
                }
            }
            if let Some(z) = &i.initial {
                if let Some(k) = z.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(CliError::config(format!("inversion.initial[{k}]"), "must be positive"));
                }
            }
            positive("inversion.gtol", i.gtol)?;
        }
        Ok(())
    }

    pub fn require<'a, X>(field: &'a Option<X>, path: &str) -> CliResult<&'a X> {
        field.as_ref().ok_or_else(|| CliError::config(path, "required for this command"))
    }
}

impl ObjectiveConfig {
    pub fn need(&self, v: Option<f64>, name: &str) -> CliResult<f64> {
        v.ok_or_else(|| CliError::config(format!("objective.{name}"), format!("`{}` needs `{name}`", self.name)))
    }
}
