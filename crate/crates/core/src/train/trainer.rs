//! The training loop and its trace.

use std::io::{self, Write};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::objectives::DynObjective;
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;
use crate::train::optim::OptimizerState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord<T> {
    pub step: usize,
    pub objective: T,
    pub grad_norm: T,
    pub wall_ms: f64,
}

/// Per-step records, contiguous from step 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace<T> {
    pub records: Vec<TraceRecord<T>>,
}

impl<T: Scalar> TrainingTrace<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<T> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// CSV with header `step,objective,grad_norm,wall_ms`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,objective,grad_norm,wall_ms")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{:.3}", r.step, r.objective, r.grad_norm, r.wall_ms)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub steps: usize,
    pub seed: u64,
    /// Draw fresh MC noise every step; otherwise every step reuses one stream.
    pub resample_noise: bool,
    /// Abort once the objective exceeds this multiple of `max(|J₀|, 1)`.
    pub divergence_factor: T,
    /// Evaluate the reporting objective every this many steps (and at the end).
    pub eval_every: Option<usize>,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            steps,
            seed,
            resample_noise: true,
            divergence_factor: T::of(1e6),
            eval_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub step: usize,
    pub value: T,
    pub std_error: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub params: Vec<T>,
    pub trace: TrainingTrace<T>,
    pub evaluations: Vec<Evaluation<T>>,
}

/// Noise stream used at `step` under `cfg`.
pub fn step_noise<T>(cfg: &TrainConfig<T>, step: usize) -> RandomStream {
    let base = RandomStream::new(cfg.seed, 0);
    if cfg.resample_noise {
        base.substream(step as u64)
    } else {
        base
    }
}

/// Runs `cfg.steps` optimizer updates on `objective` starting at `params`.
///
/// `evaluator` (typically the same objective with many more samples) is
/// scored on a fixed stream at the configured cadence.
pub fn train<T: Scalar>(
    objective: &dyn DynObjective<T>,
    evaluator: Option<&dyn DynObjective<T>>,
    mut params: Vec<T>,
    opt: &mut OptimizerState<T>,
    cfg: &TrainConfig<T>,
) -> Result<TrainOutcome<T>> {
    let start = Instant::now();
    let eval_noise = RandomStream::new(cfg.seed, 1);
    let mut trace = TrainingTrace { records: Vec::with_capacity(cfg.steps) };
    let mut evaluations = Vec::new();
    let mut limit = None;
    let evaluate = |step: usize, params: &[T], evaluations: &mut Vec<Evaluation<T>>| -> Result<()> {
        if let Some(e) = evaluator {
            let r = e.value(params, &eval_noise)?;
            evaluations.push(Evaluation {
                step,
                value: r.value,
                std_error: r.std_error,
            });
        }
        Ok(())
    };
    for step in 0..cfg.steps {
        let eval = objective.evaluate(&params, &step_noise(cfg, step))?;
        let limit = *limit.get_or_insert_with(|| cfg.divergence_factor * eval.value.abs().max(T::one()));
        if !eval.value.is_finite() || eval.value > limit {
            return Err(Error::Divergence {
                step,
                value: eval.value.to_f64_lossy(),
                limit: limit.to_f64_lossy(),
            });
        }
        let grad_norm = eval.grad.iter().fold(T::zero(), |a, &g| a + g * g).sqrt();
        trace.records.push(TraceRecord {
            step,
            objective: eval.value,
            grad_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if let Some(every) = cfg.eval_every.filter(|&k| k > 0) {
            if step % every == 0 {
                evaluate(step, &params, &mut evaluations)?;
            }
        }
        opt.step(&mut params, &eval.grad)?;
    }
    evaluate(cfg.steps, &params, &mut evaluations)?;
    Ok(TrainOutcome {
        params,
        trace,
        evaluations,
    })
}
