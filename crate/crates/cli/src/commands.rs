//! The `solve`, `invert` and `fit` commands. Each writes its artifacts and a
//! `manifest.json` into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use varphys::inversion::{
    physics_regularized_invert, tikhonov_invert, tikhonov_objective, ForwardBinding, InverseProblemSpec, LbfgsOptions,
    PhysicsInverseSpec,
};
use varphys::models::{Checkpoint, PinnField};
use varphys::prob::RandomStream;
use varphys::train::{train, OptimizerKind, OptimizerState, Schedule, TrainConfig, TrainingTrace};

use crate::config::{ExperimentConfig, InversionConfig, InversionMethod, LoadedConfig, OptimizerKindConfig, ScheduleConfig, TrialKind};
use crate::error::{CliError, CliResult};
use crate::problem::{linear_map, observed_data, streams, Problem};
use crate::registry::{build, gradient_suite};

/// Finite-difference points beyond the initial one in `fit --check-grad`.
pub const GRADCHECK_EXTRA_POINTS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Invert,
    Fit { check_grad: bool },
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Invert => "invert",
            Self::Fit { .. } => "fit",
        }
    }
}

/// Collects artifacts written by one run.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, v: &Value) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(v).expect("JSON values serialize");
        text.push('\n');
        self.write(name, text)
    }

    fn trace(&mut self, trace: &TrainingTrace<f64>) -> CliResult<()> {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        self.write("trace.csv", buf)
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

fn indexed(header: &str, values: &[f64]) -> String {
    csv(header, values.iter().enumerate().map(|(i, v)| vec![i as f64, *v]))
}

/// Runs `cmd` on a loaded config, writing into `out`.
pub fn run_command(cmd: Command, loaded: &LoadedConfig, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = loaded.config.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut output = Output::create(out)?;
    let extra = match cmd {
        Command::Solve => solve(&cfg, &mut output)?,
        Command::Invert => invert(&cfg, &mut output)?,
        Command::Fit { check_grad } => fit(&cfg, check_grad, &mut output)?,
    };
    let manifest = json!({
        "command": cmd.name(),
        "config": loaded.path.display().to_string(),
        "config_sha256": hex::encode(Sha256::digest(&loaded.raw)),
        "seed": cfg.seed,
        "versions": { "varphys": varphys::VERSION, "varphys-cli": env!("CARGO_PKG_VERSION") },
        "outputs": output.files,
        "result": extra,
        "wall_ms": start.elapsed().as_secs_f64() * 1e3,
    });
    output.json("manifest.json", &manifest)
}

fn solve(cfg: &ExperimentConfig, out: &mut Output) -> CliResult<Value> {
    let problem = Problem::from_experiment(cfg)?;
    let z = ExperimentConfig::require(&cfg.coefficients, "coefficients")?;
    problem.check_coefficients("coefficients", z)?;
    let u = problem.solve(z)?;
    let x = problem.mesh.nodes();
    out.write("solution.csv", csv("x,u", x.iter().zip(u.coeffs()).map(|(x, u)| vec![*x, *u])))?;
    Ok(json!({ "nodes": x.len() }))
}

fn lbfgs_options(inv: &InversionConfig) -> LbfgsOptions<f64> {
    LbfgsOptions {
        max_iters: inv.max_iters,
        gtol: inv.gtol,
        memory: inv.memory,
    }
}

fn invert(cfg: &ExperimentConfig, out: &mut Output) -> CliResult<Value> {
    let inv = ExperimentConfig::require(&cfg.inversion, "inversion")?;
    match inv.method {
        InversionMethod::Tikhonov => invert_tikhonov(cfg, inv, out),
        InversionMethod::Physics => invert_physics(cfg, inv, out),
    }
}

fn tikhonov_spec(cfg: &ExperimentConfig) -> CliResult<(InverseProblemSpec<f64>, Option<Problem>)> {
    let obs_cfg = ExperimentConfig::require(&cfg.observation, "observation")?;
    let inv = ExperimentConfig::require(&cfg.inversion, "inversion")?;
    if cfg.problem.is_some() {
        let problem = Problem::from_experiment(cfg)?;
        let obs = problem.observation_model(obs_cfg)?;
        let map = problem.poisson_map(Some(obs.clone()))?;
        let y = observed_data(obs_cfg, cfg.seed, |truth| {
            problem.check_coefficients("observation.truth", truth)?;
            Ok(varphys::pde::observe(&problem.solve(truth)?, &obs, None)?)
        })?;
        let spec = InverseProblemSpec {
            y,
            binding: ForwardBinding::Pde(map),
            beta: inv.beta,
        };
        Ok((spec, Some(problem)))
    } else {
        let matrix = ExperimentConfig::require(&obs_cfg.matrix, "observation.matrix")?;
        let a = linear_map(Some(matrix), matrix[0].len())?;
        let y = observed_data(obs_cfg, cfg.seed, |t| Ok(varphys::models::ForwardModel::apply(&a, &[], t)?))?;
        let spec = InverseProblemSpec {
            y,
            binding: ForwardBinding::Linear(a),
            beta: inv.beta,
        };
        Ok((spec, None))
    }
}

/// `(data fit, regularizer)` at physical `z`, each without the β factor.
fn tikhonov_terms(spec: &InverseProblemSpec<f64>, z: &[f64]) -> CliResult<(f64, f64)> {
    let params: Vec<f64> = match spec.binding {
        ForwardBinding::Pde(_) => z.iter().map(|v| v.ln()).collect(),
        ForwardBinding::Linear(_) => z.to_vec(),
    };
    let at = |beta| InverseProblemSpec { beta, ..spec.clone() };
    let fit = tikhonov_objective(&at(0.0), &params)?.0;
    let reg = tikhonov_objective(&at(1.0), &params)?.0 - fit;
    Ok((fit, reg))
}

fn invert_tikhonov(cfg: &ExperimentConfig, inv: &InversionConfig, out: &mut Output) -> CliResult<Value> {
    let (spec, problem) = tikhonov_spec(cfg)?;
    let dim = match (&spec.binding, &problem) {
        (ForwardBinding::Pde(_), Some(p)) => p.z_dim(),
        (ForwardBinding::Linear(a), _) => a.cols(),
        _ => unreachable!(),
    };
    let z0 = match &inv.initial {
        Some(z) if z.len() != dim => return Err(CliError::config("inversion.initial", format!("expected {dim} values"))),
        Some(z) => z.clone(),
        None if problem.is_some() => vec![1.0; dim],
        None => vec![0.0; dim],
    };
    let opts = lbfgs_options(inv);
    let result = tikhonov_invert(&spec, &z0, &opts)?;
    out.write("z.csv", indexed("index,z", &result.z))?;
    out.trace(&result.trace)?;
    let (fit, reg) = tikhonov_terms(&spec, &result.z)?;
    let mut summary = json!({
        "z": result.z,
        "objective": result.value,
        "data_fit": fit,
        "regularizer": reg,
        "iterations": result.iterations,
        "converged": result.converged,
    });
    if let Some(betas) = &inv.beta_sweep {
        let mut rows = Vec::new();
        for &beta in betas {
            let s = InverseProblemSpec { beta, ..spec.clone() };
            let r = tikhonov_invert(&s, &z0, &opts)?;
            let (fit, reg) = tikhonov_terms(&s, &r.z)?;
            let norm = r.z.iter().map(|v| v * v).sum::<f64>().sqrt();
            rows.push(vec![beta, fit, reg, norm]);
        }
        out.write("sweep.csv", csv("beta,data_fit,regularizer,z_norm", rows.clone()))?;
        summary["sweep_rows"] = json!(rows.len());
    }
    out.json("summary.json", &summary)?;
    Ok(json!({ "converged": result.converged }))
}

fn invert_physics(cfg: &ExperimentConfig, inv: &InversionConfig, out: &mut Output) -> CliResult<Value> {
    let problem = Problem::from_experiment(cfg)?;
    let obs_cfg = ExperimentConfig::require(&cfg.observation, "observation")?;
    let obs = problem.observation_model(obs_cfg)?;
    let y = observed_data(obs_cfg, cfg.seed, |truth| {
        problem.check_coefficients("observation.truth", truth)?;
        Ok(varphys::pde::observe(&problem.solve(truth)?, &obs, None)?)
    })?;
    let mut model = problem.residual_model()?;
    let u0 = match inv.trial {
        TrialKind::Fem => vec![0.0; model.u_dim()],
        TrialKind::Pinn => {
            let pinn = PinnField::new(&inv.pinn_hidden, problem.mesh.a(), problem.mesh.b())
                .map_err(|e| CliError::setup("inversion.pinn_hidden", e))?;
            let points = ExperimentConfig::require(&inv.collocation, "inversion.collocation")?.clone();
            let u0 = pinn.init_params(&RandomStream::new(cfg.seed, streams::INIT));
            model = model.with_collocation(pinn, points).map_err(|e| CliError::setup("inversion.collocation", e))?;
            u0
        }
    };
    let dim = problem.z_dim();
    let z0 = match &inv.initial {
        Some(z) if z.len() != dim => return Err(CliError::config("inversion.initial", format!("expected {dim} values"))),
        Some(z) => z.clone(),
        None => vec![1.0; dim],
    };
    if y.len() != obs.dim() {
        return Err(CliError::config("observation.y", format!("expected {} values, got {}", obs.dim(), y.len())));
    }
    let spec = PhysicsInverseSpec {
        model,
        obs,
        y,
        beta: inv.beta,
        alternating: inv.alternating,
    };
    let r = physics_regularized_invert(&spec, &u0, &z0, &lbfgs_options(inv))?;
    out.write("z.csv", indexed("index,z", &r.z))?;
    out.write("u.csv", indexed("index,u", &r.u))?;
    out.trace(&r.trace)?;
    out.json(
        "summary.json",
        &json!({
            "z": r.z,
            "objective": r.value,
            "data_misfit": r.data_misfit,
            "residual_norm_squared": r.residual_norm_squared,
            "iterations": r.iterations,
            "converged": r.converged,
        }),
    )?;
    Ok(json!({ "converged": r.converged }))
}

fn fit(cfg: &ExperimentConfig, check_grad: bool, out: &mut Output) -> CliResult<Value> {
    let built = build(cfg)?;
    if check_grad {
        let suite = gradient_suite(built.objective.as_ref(), cfg.seed, GRADCHECK_EXTRA_POINTS)?;
        let v = json!({
            "objective": built.name,
            "points": suite.points,
            "max_rel_error": suite.max_rel_error,
            "worst": suite.worst.map(|(point, index, tape, numeric)| json!({
                "point": point, "index": index, "tape": tape, "numeric": numeric,
            })),
            "passed": suite.passed,
        });
        out.json("gradcheck.json", &v)?;
        if !suite.passed {
            return Err(CliError::Numeric(format!(
                "gradient check failed for `{}`: max relative error {:e}",
                built.name, suite.max_rel_error
            )));
        }
        return Ok(v);
    }
    let o = ExperimentConfig::require(&cfg.optimizer, "optimizer")?;
    let params = built.objective.initial_params(&RandomStream::new(cfg.seed, streams::INIT));
    let kind = match o.kind {
        OptimizerKindConfig::Adam => OptimizerKind::adam(),
        OptimizerKindConfig::Sgd => OptimizerKind::Sgd,
    };
    let schedule = match o.schedule {
        None | Some(ScheduleConfig::Constant) => Schedule::Constant,
        Some(ScheduleConfig::Cosine { min_lr }) => Schedule::Cosine { total: o.steps, min_lr },
    };
    let mut opt = OptimizerState::new(kind, o.lr, params.len()).with_schedule(schedule);
    let mut tc = TrainConfig::new(o.steps, cfg.seed);
    tc.resample_noise = o.resample_noise;
    tc.eval_every = o.eval_every;
    let outcome = train(built.objective.as_ref(), Some(built.evaluator.as_ref()), params, &mut opt, &tc)?;
    let ckpt = Checkpoint::new(outcome.params.clone())
        .with("objective", built.name)
        .with("seed", cfg.seed)
        .with("steps", o.steps);
    out.write("checkpoint.bin", ckpt.to_bytes()?)?;
    out.trace(&outcome.trace)?;
    out.write(
        "evaluations.csv",
        csv(
            "step,value,std_error",
            outcome.evaluations.iter().map(|e| vec![e.step as f64, e.value, e.std_error]),
        ),
    )?;
    let last = outcome.evaluations.last();
    let summary = json!({
        "objective": built.name,
        "steps": o.steps,
        "final_objective": last.map(|e| e.value),
        "final_std_error": last.map(|e| e.std_error),
        "result": (built.summary)(&outcome.params)?,
    });
    out.json("summary.json", &summary)?;
    Ok(json!({ "final_objective": last.map(|e| e.value) }))
}
