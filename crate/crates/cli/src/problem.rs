//! Numerical objects built from config blocks.

use std::path::Path;

use varphys::models::LinearMap;
use varphys::objectives::ResidualModel;
use varphys::pde::{BasisSet, FieldCoefficients, IntervalMesh, NoiseCovariance, ObservationModel, SourceField};
use varphys::prob::{Gaussian, LogUniformPrior, NoiseSource, Prior, RandomStream, UniformPrior};
use varphys::models::PoissonMap;
use varphys::autodiff::Real;

use crate::config::{BasisConfig, ExperimentConfig, ObservationConfig, PriorConfig, ProblemConfig, SourceConfig};
use crate::error::{CliError, CliResult};

/// Stream indices derived from the experiment seed.
pub mod streams {
    pub const DATA_NOISE: u64 = 2;
    pub const TEST_DRAWS: u64 = 3;
    pub const GENERATOR: u64 = 4;
    pub const INIT: u64 = 5;
    pub const GRADCHECK: u64 = 6;
    pub const TRAIN_PAIRS: u64 = 7;
    pub const SUMMARY: u64 = 8;
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: IntervalMesh<f64>,
    pub z_basis: BasisSet<f64>,
    pub source: SourceField<f64>,
    pub log_params: bool,
}

impl Problem {
    pub fn from_config(p: &ProblemConfig) -> CliResult<Self> {
        let [a, b] = p.domain;
        let mesh = IntervalMesh::new(a, b, p.mesh_size + 1).map_err(|e| CliError::setup("problem.mesh_size", e))?;
        let z_basis = match &p.parameter_basis {
            BasisConfig::PiecewiseConstant { cells } => {
                BasisSet::piecewise_constant(mesh.clone(), *cells).map_err(|e| CliError::setup("problem.parameter_basis", e))?
            }
            BasisConfig::PerElement => BasisSet::per_element(mesh.clone()),
            BasisConfig::Hat => BasisSet::hat(mesh.clone()),
        };
        let source = match &p.source {
            SourceConfig::Constant { value } => SourceField::Constant(*value),
            SourceConfig::Sine { amplitude, frequency } => {
                let (amp, k) = (*amplitude, *frequency);
                SourceField::function(move |x: f64| amp * (k * std::f64::consts::PI * x).sin())
            }
            SourceConfig::Nodal { values } => SourceField::Field(
                FieldCoefficients::new(BasisSet::hat(mesh.clone()), values.clone())
                    .map_err(|e| CliError::setup("problem.source.values", e))?,
            ),
        };
        Ok(Self {
            mesh,
            z_basis,
            source,
            log_params: p.log_params,
        })
    }

    pub fn from_experiment(cfg: &ExperimentConfig) -> CliResult<Self> {
        Self::from_config(ExperimentConfig::require(&cfg.problem, "problem")?)
    }

    pub fn z_dim(&self) -> usize {
        self.z_basis.size()
    }

    pub fn u_dim(&self) -> usize {
        self.mesh.num_interior()
    }

    /// Physical coefficients to the optimization parameterization.
    pub fn to_params(&self, z: &[f64]) -> Vec<f64> {
        if self.log_params {
            z.iter().map(|v| v.ln()).collect()
        } else {
            z.to_vec()
        }
    }

    pub fn to_physical<R: Real<f64>>(&self, p: &[R]) -> Vec<R> {
        if self.log_params {
            p.iter().map(|v| v.exp()).collect()
        } else {
            p.to_vec()
        }
    }

    pub fn check_coefficients(&self, path: &str, z: &[f64]) -> CliResult<()> {
        if z.len() != self.z_dim() {
            return Err(CliError::config(
                path,
                format!("expected {} coefficients for the parameter basis, got {}", self.z_dim(), z.len()),
            ));
        }
        Ok(())
    }

    /// FEM solution (with boundary values) for physical coefficients `z`.
    pub fn solve(&self, z: &[f64]) -> CliResult<FieldCoefficients<f64>> {
        let field = FieldCoefficients::new(self.z_basis.clone(), z.to_vec())?;
        Ok(varphys::pde::solve_poisson_fem(&field, &self.source, &self.mesh)?)
    }

    pub fn residual_model(&self) -> CliResult<ResidualModel<f64>> {
        let m = ResidualModel::new(self.mesh.clone(), self.z_basis.clone(), self.source.clone())
            .map_err(|e| CliError::setup("problem", e))?;
        Ok(if self.log_params { m.with_log_params() } else { m })
    }

    pub fn poisson_map(&self, obs: Option<ObservationModel<f64>>) -> CliResult<PoissonMap<f64>> {
        let mut m = PoissonMap::new(self.mesh.clone(), self.z_basis.clone(), &self.source).map_err(|e| CliError::setup("problem", e))?;
        if let Some(o) = obs {
            m = m.with_observation(o);
        }
        Ok(if self.log_params { m.with_log_params() } else { m })
    }

    pub fn observation_model(&self, o: &ObservationConfig) -> CliResult<ObservationModel<f64>> {
        let sensors = o.sensors.clone().unwrap_or_else(|| {
            let nodes = self.mesh.nodes();
            nodes[1..nodes.len() - 1].to_vec()
        });
        ObservationModel::isotropic(&self.mesh, sensors, o.sigma).map_err(|e| CliError::setup("observation.sensors", e))
    }

    /// The observation operator on interior nodal values as a matrix.
    pub fn observation_matrix(&self, obs: &ObservationModel<f64>) -> CliResult<LinearMap<f64>> {
        let n = self.u_dim();
        let m = obs.dim();
        let hat = BasisSet::hat(self.mesh.clone());
        let mut h = vec![0.0; m * n];
        for k in 0..n {
            let mut e = vec![0.0; n + 2];
            e[k + 1] = 1.0;
            for (i, v) in obs.apply_with(&hat, &e)?.into_iter().enumerate() {
                h[i * n + k] = v;
            }
        }
        Ok(LinearMap::new(h, m, n)?)
    }
}

/// Data `y` from an observation block: literal values, a CSV file, or a
/// synthetic solve at `truth` (the closure maps truth to noiseless data).
pub fn observed_data(
    o: &ObservationConfig,
    seed: u64,
    synthesize: impl FnOnce(&[f64]) -> CliResult<Vec<f64>>,
) -> CliResult<Vec<f64>> {
    if let Some(y) = &o.y {
        return Ok(y.clone());
    }
    if let Some(path) = &o.file {
        return read_y_column(path);
    }
    if let Some(truth) = &o.truth {
        let mut y = synthesize(truth)?;
        if o.noisy {
            let mut g = RandomStream::new(seed, streams::DATA_NOISE).generator();
            for v in &mut y {
                *v += o.sigma * g.normal::<f64>();
            }
        }
        return Ok(y);
    }
    Err(CliError::config("observation", "one of `y`, `file`, `truth` is required"))
}

fn read_y_column(path: &Path) -> CliResult<Vec<f64>> {
    let at = "observation.file";
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(at, format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| CliError::config(at, "file is empty"))?;
    let col = header
        .split(',')
        .position(|h| h.trim() == "y")
        .ok_or_else(|| CliError::config(at, "header has no `y` column"))?;
    lines
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .nth(col)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::config(at, format!("row {} has no numeric `y`", i + 1)))
        })
        .collect()
}

/// Row-major matrix from nested rows, or the identity of size `d`.
pub fn linear_map(matrix: Option<&Vec<Vec<f64>>>, d: usize) -> CliResult<LinearMap<f64>> {
    match matrix {
        Some(rows) => {
            let cols = rows[0].len();
            Ok(LinearMap::new(rows.concat(), rows.len(), cols).map_err(|e| CliError::setup("observation.matrix", e))?)
        }
        None => {
            let mut m = vec![0.0; d * d];
            for i in 0..d {
                m[i * d + i] = 1.0;
            }
            Ok(LinearMap::new(m, d, d)?)
        }
    }
}

pub fn isotropic_noise(sigma: f64, d: usize) -> CliResult<NoiseCovariance<f64>> {
    NoiseCovariance::isotropic(sigma, d).map_err(|e| CliError::setup("observation.sigma", e))
}

/// A prior chosen at run time.
#[derive(Debug, Clone)]
pub enum AnyPrior {
    Gaussian(Gaussian<f64>),
    Uniform(UniformPrior<f64>),
    LogUniform(LogUniformPrior<f64>),
}

impl AnyPrior {
    pub fn from_config(p: &PriorConfig, dim: usize) -> CliResult<Self> {
        let at = |e| CliError::setup("prior", e);
        Ok(match *p {
            PriorConfig::Gaussian { mean, std } => Self::Gaussian(Gaussian::diagonal(vec![mean; dim], &vec![std; dim]).map_err(at)?),
            PriorConfig::Uniform { lo, hi } => Self::Uniform(UniformPrior::new(lo, hi, dim).map_err(at)?),
            PriorConfig::LogUniform { lo, hi } => Self::LogUniform(LogUniformPrior::new(lo, hi, dim).map_err(at)?),
        })
    }

    /// The prior over the latent parameterization of a PDE problem: uniform and
    /// log-uniform bounds are given on physical `z`, and become bounds on `ln z`
    /// when the problem optimizes log coefficients.
    pub fn for_problem(p: &PriorConfig, problem: &Problem) -> CliResult<Self> {
        let dim = problem.z_dim();
        if !problem.log_params {
            return Self::from_config(p, dim);
        }
        let at = |e| CliError::setup("prior", e);
        Ok(match *p {
            PriorConfig::Gaussian { .. } => Self::from_config(p, dim)?,
            PriorConfig::Uniform { lo, hi } | PriorConfig::LogUniform { lo, hi } => {
                if lo.is_nan() || lo <= 0.0 {
                    return Err(CliError::config("prior.lo", "log-parameterized coefficients need lo > 0"));
                }
                Self::Uniform(UniformPrior::new(lo.ln(), hi.ln(), dim).map_err(at)?)
            }
        })
    }

    /// A representative point (mean or box centre).
    pub fn centre(&self) -> Vec<f64> {
        match self {
            Self::Gaussian(g) => g.mean().to_vec(),
            Self::Uniform(u) => vec![0.5 * (u.lo() + u.hi()); u.dim()],
            Self::LogUniform(u) => vec![(u.lo() * u.hi()).sqrt(); u.dim()],
        }
    }
}

impl Prior<f64> for AnyPrior {
    fn dim(&self) -> usize {
        match self {
            Self::Gaussian(p) => Prior::dim(p),
            Self::Uniform(p) => p.dim(),
            Self::LogUniform(p) => p.dim(),
        }
    }

    fn log_density_with<R: Real<f64>>(&self, z: &[R]) -> R {
        match self {
            Self::Gaussian(p) => Prior::log_density_with(p, z),
            Self::Uniform(p) => p.log_density_with(z),
            Self::LogUniform(p) => p.log_density_with(z),
        }
    }

    fn sample(&self, noise: &mut NoiseSource) -> Vec<f64> {
        match self {
            Self::Gaussian(p) => Prior::sample(p, noise),
            Self::Uniform(p) => p.sample(noise),
            Self::LogUniform(p) => p.sample(noise),
        }
    }

    fn as_gaussian(&self) -> Option<&Gaussian<f64>> {
        match self {
            Self::Gaussian(p) => Some(p),
            _ => None,
        }
    }
}
