//! Joint (or alternating) minimization of data misfit plus a residual penalty.

use crate::autodiff::{value_and_gradient, Real};
use crate::error::{check_dim, Error, Result};
use crate::inversion::lbfgs::{lbfgs, LbfgsOptions};
use crate::objectives::residual::ResidualModel;
use crate::pde::observe::ObservationModel;
use crate::scalar::Scalar;
use crate::train::trainer::{TraceRecord, TrainingTrace};

#[derive(Debug, Clone)]
pub struct PhysicsInverseSpec<T> {
    pub model: ResidualModel<T>,
    pub obs: ObservationModel<T>,
    pub y: Vec<T>,
    pub beta: T,
    /// Alternate u-steps and z-steps instead of descending jointly.
    pub alternating: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsResult<T> {
    /// Trial vector (interior nodal values or PINN parameters).
    pub u: Vec<T>,
    /// Physical coefficients of `z`.
    pub z: Vec<T>,
    pub value: T,
    pub data_misfit: T,
    pub residual_norm_squared: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step.
    pub values: Vec<T>,
    /// The same steps with gradient norms (of the block being updated in
    /// alternating mode) and elapsed time.
    pub trace: TrainingTrace<T>,
}

impl<T: Scalar> PhysicsInverseSpec<T> {
    /// `(‖y − H u‖², ‖r(u, z)‖²)` with `z` in the model's parameterization.
    pub fn terms_with<R: Real<T>>(&self, u: &[R], z: &[R]) -> Result<(R, R)> {
        let pred = self.model.observe_with(u, &self.obs)?;
        let mut misfit = u[0].zero_like();
        for (p, &t) in pred.iter().zip(&self.y) {
            misfit = misfit + (*p - t).square();
        }
        Ok((misfit, self.model.residual_norm_squared_with(u, z)?))
    }

    pub fn objective_with<R: Real<T>>(&self, u: &[R], z: &[R]) -> Result<R> {
        let (m, r) = self.terms_with(u, z)?;
        Ok(m + r * self.beta)
    }

    fn to_params(&self, z: &[T]) -> Vec<T> {
        if self.model.log_params() {
            z.iter().map(|v| v.ln()).collect()
        } else {
            z.to_vec()
        }
    }
}

/// Minimizes `‖y − H u‖² + β ‖r(u, z)‖²` over `(u, z)` from `(u0, z0)`.
///
/// `z0` holds physical coefficients; models with log parameters optimize `ln z`.
/// In alternating mode each round runs a u-block then a z-block solve, each
/// with `opts`, until a round makes no progress or `opts.max_iters` rounds pass.
pub fn physics_regularized_invert<T: Scalar>(
    spec: &PhysicsInverseSpec<T>,
    u0: &[T],
    z0: &[T],
    opts: &LbfgsOptions<T>,
) -> Result<PhysicsResult<T>> {
    let (du, dz) = (spec.model.u_dim(), spec.model.z_dim());
    check_dim("initial trial vector", du, u0.len())?;
    check_dim("initial coefficients", dz, z0.len())?;
    check_dim("observations", spec.obs.dim(), spec.y.len())?;
    if !(spec.beta >= T::zero() && spec.beta.is_finite()) {
        return Err(Error::Parameter {
            name: "beta",
            reason: format!("must be non-negative, got {}", spec.beta),
        });
    }
    if spec.model.log_params() && z0.iter().any(|v| !(*v > T::zero())) {
        return Err(Error::Parameter {
            name: "z0",
            reason: "log-parameterized coefficients must start positive".into(),
        });
    }
    let joint = |p: &[T]| -> Result<(T, Vec<T>)> {
        let (v, g, ()) = value_and_gradient(p, |_, x| {
            let (u, z) = x.split_at(du);
            Ok::<_, Error>((spec.objective_with(u, z)?, ()))
        })?;
        Ok((v, g))
    };
    let mut x = u0.to_vec();
    x.extend(spec.to_params(z0));
    let (x, iterations, converged, values, trace) = if spec.alternating {
        let mut values = vec![joint(&x)?.0];
        let mut trace = TrainingTrace::default();
        let mut elapsed = 0.0;
        let mut append = |t: &TrainingTrace<T>, first: bool, elapsed: &mut f64| {
            let offset = *elapsed;
            for r in t.records.iter().skip(if first { 0 } else { 1 }) {
                trace.records.push(TraceRecord {
                    step: trace.records.len(),
                    wall_ms: offset + r.wall_ms,
                    ..*r
                });
            }
            *elapsed = offset + t.records.last().map_or(0.0, |r| r.wall_ms);
        };
        let mut iterations = 0;
        let mut converged = false;
        for round in 0..opts.max_iters.max(1) {
            let zs = x[du..].to_vec();
            let ru = lbfgs(
                |u| {
                    let mut p = u.to_vec();
                    p.extend_from_slice(&zs);
                    let (v, g) = joint(&p)?;
                    Ok((v, g[..du].to_vec()))
                },
                x[..du].to_vec(),
                opts,
            )?;
            x[..du].copy_from_slice(&ru.x);
            append(&ru.trace, round == 0, &mut elapsed);
            let us = x[..du].to_vec();
            let rz = lbfgs(
                |z| {
                    let mut p = us.clone();
                    p.extend_from_slice(z);
                    let (v, g) = joint(&p)?;
                    Ok((v, g[du..].to_vec()))
                },
                x[du..].to_vec(),
                opts,
            )?;
            x[du..].copy_from_slice(&rz.x);
            append(&rz.trace, false, &mut elapsed);
            iterations += ru.iterations + rz.iterations;
            values.extend(ru.values.into_iter().skip(1));
            values.extend(rz.values.into_iter().skip(1));
            let (_, g) = joint(&x)?;
            let gnorm = g.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            if gnorm <= opts.gtol {
                converged = true;
                break;
            }
            if ru.iterations + rz.iterations == 0 {
                break;
            }
        }
        (x, iterations, converged, values, trace)
    } else {
        let r = lbfgs(joint, x, opts)?;
        (r.x, r.iterations, r.converged, r.values, r.trace)
    };
    let (u, zp) = x.split_at(du);
    let (misfit, resid) = spec.terms_with(u, zp)?;
    Ok(PhysicsResult {
        u: u.to_vec(),
        z: spec.model.physical_z(zp),
        value: misfit + resid * spec.beta,
        data_misfit: misfit,
        residual_norm_squared: resid,
        iterations,
        converged,
        values,
        trace,
    })
}
