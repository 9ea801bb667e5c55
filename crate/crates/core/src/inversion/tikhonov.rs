//! Tikhonov-regularized least squares with an explicit adjoint gradient.

use crate::autodiff::{value_and_gradient, Real};
use crate::error::{check_dim, Error, Result};
use crate::inversion::lbfgs::{lbfgs, LbfgsOptions, LbfgsReport};
use crate::models::maps::{ForwardModel, LinearMap, PoissonMap};
use crate::pde::basis::BasisSet;
use crate::pde::field::FieldCoefficients;
use crate::pde::residual::element_conductances;
use crate::pde::solve::solve_interior_with;
use crate::scalar::Scalar;
use crate::train::trainer::TrainingTrace;

/// What maps parameters to predicted observations.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardBinding<T> {
    /// `y ≈ A z`, bypassing the PDE; the regularizer is the Euclidean norm.
    Linear(LinearMap<T>),
    /// `y ≈ H F(z)`, optimized over `ln z`; the regularizer is `∫ z(x)² dx`.
    Pde(PoissonMap<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseProblemSpec<T> {
    pub y: Vec<T>,
    pub binding: ForwardBinding<T>,
    pub beta: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TikhonovResult<T> {
    /// Estimated coefficients (physical, not log).
    pub z: Vec<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
    pub converged: bool,
    pub values: Vec<T>,
    pub trace: TrainingTrace<T>,
}

impl<T: Scalar> TikhonovResult<T> {
    /// The estimate as a field, for PDE bindings.
    pub fn field(&self, spec: &InverseProblemSpec<T>) -> Result<FieldCoefficients<T>> {
        match &spec.binding {
            ForwardBinding::Pde(map) => FieldCoefficients::new(map.z_basis().clone(), self.z.clone()),
            ForwardBinding::Linear(_) => Err(Error::UnsupportedRepresentation(
                "linear bindings have no parameter field".into(),
            )),
        }
    }
}

/// Precomputed linear pieces of the PDE-constrained misfit.
struct Adjoint<'a, T> {
    map: &'a PoissonMap<T>,
    /// Observation matrix on interior nodes, row-major `m × n`.
    h: Vec<T>,
    m: usize,
    /// `∂c_e/∂z_j`, row-major `n_e × n_z`.
    dc: Vec<T>,
}

impl<'a, T: Scalar> Adjoint<'a, T> {
    fn new(map: &'a PoissonMap<T>) -> Result<Self> {
        let mesh = map.mesh();
        let n = mesh.num_interior();
        let (h, m) = match map.observation() {
            None => {
                let mut h = vec![T::zero(); n * n];
                for i in 0..n {
                    h[i * n + i] = T::one();
                }
                (h, n)
            }
            Some(obs) => {
                let m = obs.dim();
                let hat = BasisSet::hat(mesh.clone());
                let mut h = vec![T::zero(); m * n];
                for k in 0..n {
                    let mut e = vec![T::zero(); mesh.num_nodes()];
                    e[k + 1] = T::one();
                    for (i, v) in obs.apply_with(&hat, &e)?.into_iter().enumerate() {
                        h[i * n + k] = v;
                    }
                }
                (h, m)
            }
        };
        let nz = map.z_basis().size();
        let ne = mesh.num_elements();
        let mut dc = vec![T::zero(); ne * nz];
        for j in 0..nz {
            let mut e = vec![T::zero(); nz];
            e[j] = T::one();
            for (k, c) in element_conductances(mesh, map.z_basis(), &e)?.into_iter().enumerate() {
                dc[k * nz + j] = c;
            }
        }
        Ok(Self { map, h, m, dc })
    }

    /// `½‖H u(z) − y‖²` and its gradient in `ln z`, via one forward and one adjoint solve.
    fn misfit(&self, log_z: &[T], y: &[T]) -> Result<(T, Vec<T>)> {
        let map = self.map;
        let mesh = map.mesh();
        let z: Vec<T> = log_z.iter().map(|v| v.exp()).collect();
        let cond = element_conductances(mesh, map.z_basis(), &z)?;
        if let Some((e, c)) = cond.iter().enumerate().find(|(_, c)| !(**c > T::zero() && c.is_finite())) {
            return Err(Error::Ellipticity {
                x: mesh.node(e).to_f64_lossy(),
                value: c.to_f64_lossy(),
            });
        }
        let u = solve_interior_with(&cond, map.load());
        let n = u.len();
        let mut resid = vec![T::zero(); self.m];
        for (i, r) in resid.iter_mut().enumerate() {
            *r = (0..n).fold(-y[i], |acc, k| acc + self.h[i * n + k] * u[k]);
        }
        let value = resid.iter().fold(T::zero(), |acc, &r| acc + r * r) * T::of(0.5);
        let neg_gu: Vec<T> = (0..n)
            .map(|k| -(0..self.m).fold(T::zero(), |acc, i| acc + self.h[i * n + k] * resid[i]))
            .collect();
        // K λ = H^T (Hu − y); solve_interior_with solves K x = −load.
        let lambda = solve_interior_with(&cond, &neg_gu);
        let full = |v: &[T], i: usize| if i == 0 || i > n { T::zero() } else { v[i - 1] };
        let nz = z.len();
        let mut grad = vec![T::zero(); nz];
        for e in 0..mesh.num_elements() {
            let dj_dc = -(full(&lambda, e + 1) - full(&lambda, e)) * (full(&u, e + 1) - full(&u, e));
            for (j, g) in grad.iter_mut().enumerate() {
                *g += dj_dc * self.dc[e * nz + j];
            }
        }
        for (g, &zj) in grad.iter_mut().zip(&z) {
            *g *= zj;
        }
        Ok((value, grad))
    }
}

/// `(β/2) ∫ z(x)² dx` by two-point Gauss quadrature, with `z = exp(ζ)` coefficientwise.
fn field_penalty<T: Scalar, R: Real<T>>(map: &PoissonMap<T>, log_z: &[R], beta: T) -> Result<R> {
    let mesh = map.mesh();
    let z: Vec<R> = log_z.iter().map(|v| v.exp()).collect();
    let w = mesh.h() * T::of(0.5);
    let mut acc = log_z[0].zero_like();
    for e in 0..mesh.num_elements() {
        for q in mesh.gauss_points(e) {
            acc = acc + map.z_basis().eval_with(&z, q)?.square() * w;
        }
    }
    Ok(acc * (beta * T::of(0.5)))
}

/// Value and gradient of the Tikhonov objective at `params` (log coefficients for PDE bindings).
pub fn tikhonov_objective<T: Scalar>(spec: &InverseProblemSpec<T>, params: &[T]) -> Result<(T, Vec<T>)> {
    match &spec.binding {
        ForwardBinding::Linear(a) => linear_objective(a, &spec.y, spec.beta, params),
        ForwardBinding::Pde(map) => {
            let adj = Adjoint::new(map)?;
            pde_objective(&adj, spec, params)
        }
    }
}

fn linear_objective<T: Scalar>(a: &LinearMap<T>, y: &[T], beta: T, z: &[T]) -> Result<(T, Vec<T>)> {
    let (rows, cols, m) = (a.rows(), a.cols(), a.matrix());
    let pred = a.apply(&[], z)?;
    let resid: Vec<T> = pred.iter().zip(y).map(|(&p, &t)| p - t).collect();
    let half = T::of(0.5);
    let value = resid.iter().fold(T::zero(), |acc, &r| acc + r * r) * half
        + z.iter().fold(T::zero(), |acc, &v| acc + v * v) * (beta * half);
    let grad = (0..cols)
        .map(|j| (0..rows).fold(beta * z[j], |acc, i| acc + m[i * cols + j] * resid[i]))
        .collect();
    Ok((value, grad))
}

fn pde_objective<T: Scalar>(adj: &Adjoint<'_, T>, spec: &InverseProblemSpec<T>, log_z: &[T]) -> Result<(T, Vec<T>)> {
    let (misfit, mut grad) = adj.misfit(log_z, &spec.y)?;
    if spec.beta > T::zero() {
        let (pen, pg, ()) = value_and_gradient(log_z, |_, v| Ok::<_, Error>((field_penalty(adj.map, v, spec.beta)?, ())))?;
        for (g, p) in grad.iter_mut().zip(pg) {
            *g += p;
        }
        return Ok((misfit + pen, grad));
    }
    Ok((misfit, grad))
}

fn check_spec<T: Scalar>(spec: &InverseProblemSpec<T>, z0: &[T]) -> Result<()> {
    if !(spec.beta >= T::zero() && spec.beta.is_finite()) {
        return Err(Error::Parameter {
            name: "beta",
            reason: format!("must be non-negative, got {}", spec.beta),
        });
    }
    let (input, output) = match &spec.binding {
        ForwardBinding::Linear(a) => (a.input_dim(), a.output_dim()),
        ForwardBinding::Pde(map) => (map.input_dim(), map.output_dim()),
    };
    check_dim("initial parameters", input, z0.len())?;
    check_dim("observations", output, spec.y.len())
}

/// Minimizes `½‖y − G(z)‖² + (β/2)‖z‖²` from `z0` with L-BFGS.
///
/// PDE bindings optimize `ln z`, so every iterate is elliptic; `z0` must be positive.
pub fn tikhonov_invert<T: Scalar>(
    spec: &InverseProblemSpec<T>,
    z0: &[T],
    opts: &LbfgsOptions<T>,
) -> Result<TikhonovResult<T>> {
    check_spec(spec, z0)?;
    let report: LbfgsReport<T> = match &spec.binding {
        ForwardBinding::Linear(a) => lbfgs(|z| linear_objective(a, &spec.y, spec.beta, z), z0.to_vec(), opts)?,
        ForwardBinding::Pde(map) => {
            if let Some(&bad) = z0.iter().find(|v| !(**v > T::zero())) {
                return Err(Error::Ellipticity {
                    x: f64::NAN,
                    value: bad.to_f64_lossy(),
                });
            }
            let adj = Adjoint::new(map)?;
            let mut r = lbfgs(|p| pde_objective(&adj, spec, p), z0.iter().map(|v| v.ln()).collect(), opts)?;
            r.x = r.x.iter().map(|v| v.exp()).collect();
            r
        }
    };
    Ok(TikhonovResult {
        z: report.x,
        value: report.value,
        grad_norm: report.grad_norm,
        iterations: report.iterations,
        converged: report.converged,
        values: report.values,
        trace: report.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::field::SourceField;
    use crate::pde::mesh::IntervalMesh;
    use crate::pde::observe::ObservationModel;

    fn poisson_map() -> PoissonMap<f64> {
        let mesh = IntervalMesh::unit(13).unwrap();
        let basis = BasisSet::piecewise_constant(mesh.clone(), 3).unwrap();
        let obs = ObservationModel::isotropic(&mesh, vec![0.2, 0.45, 0.7, 0.9], 0.1).unwrap();
        PoissonMap::new(mesh, basis, &SourceField::function(|x: f64| -1.0 - x))
            .unwrap()
            .with_observation(obs)
            .with_log_params()
    }

    #[test]
    fn adjoint_matches_tape_gradient() {
        let map = poisson_map();
        let y = vec![0.05, 0.1, 0.08, 0.02];
        let spec = InverseProblemSpec {
            y: y.clone(),
            binding: ForwardBinding::Pde(map.clone()),
            beta: 0.3,
        };
        let p = [0.2, -0.4, 0.1];
        let (v, g) = tikhonov_objective(&spec, &p).unwrap();
        let (vt, gt, ()) = value_and_gradient(&p, |_, z| {
            let pred = map.apply_with(&[], z)?;
            let mut acc = z[0].zero_like();
            for (q, &t) in pred.iter().zip(&y) {
                acc = acc + (*q - t).square() * 0.5;
            }
            Ok::<_, Error>((acc + field_penalty(&map, z, 0.3)?, ()))
        })
        .unwrap();
        assert!((v - vt).abs() < 1e-14);
        for (a, b) in g.iter().zip(&gt) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn recovers_noiseless_parameters_without_regularization() {
        let map = poisson_map();
        let truth = [0.8f64, 1.5, 0.6];
        let logs: Vec<f64> = truth.iter().map(|v| v.ln()).collect();
        let y = map.apply(&[], &logs).unwrap();
        let spec = InverseProblemSpec {
            y,
            binding: ForwardBinding::Pde(map),
            beta: 0.0,
        };
        let opts = LbfgsOptions {
            gtol: 1e-12,
            max_iters: 2000,
            ..Default::default()
        };
        let r = tikhonov_invert(&spec, &[1.0, 1.0, 1.0], &opts).unwrap();
        for (a, b) in r.z.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-4 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn linear_case_matches_normal_equations() {
        let a = LinearMap::new(vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0], 2, 3).unwrap();
        let y = vec![1.0, -2.0];
        let beta = 0.5;
        let spec = InverseProblemSpec {
            y: y.clone(),
            binding: ForwardBinding::Linear(a),
            beta,
        };
        let opts = LbfgsOptions {
            gtol: 1e-13,
            ..Default::default()
        };
        let r = tikhonov_invert(&spec, &[0.0; 3], &opts).unwrap();
        // (AᵀA + βI) z = Aᵀy, solved by hand-unrolled Cramer's rule.
        let m = [[5.5, 5.0, 1.0], [5.0, 10.5, 3.0], [1.0, 3.0, 1.5]];
        let b = [0.0, -5.0, -2.0];
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(m);
        for j in 0..3 {
            let mut mj = m;
            for i in 0..3 {
                mj[i][j] = b[i];
            }
            assert!((r.z[j] - det(mj) / d).abs() < 1e-10);
        }
    }
}
