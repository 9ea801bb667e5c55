use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, log_det_from_cholesky, lower_mul, solve_lower};
use crate::pde::basis::BasisSet;
use crate::pde::field::FieldCoefficients;
use crate::pde::mesh::IntervalMesh;
use crate::scalar::Scalar;

/// Symmetric positive-definite noise covariance `Γ`, stored with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariance<T> {
    dim: usize,
    matrix: Vec<T>,
    chol: Vec<T>,
    log_det: T,
}

impl<T: Scalar> NoiseCovariance<T> {
    /// `Γ` from a row-major `dim × dim` matrix.
    pub fn new(matrix: Vec<T>, dim: usize) -> Result<Self> {
        let chol = cholesky(&matrix, dim)?;
        let log_det = log_det_from_cholesky(&chol, dim);
        Ok(Self {
            dim,
            matrix,
            chol,
            log_det,
        })
    }

    /// `σ² I`.
    pub fn isotropic(sigma: T, dim: usize) -> Result<Self> {
        if !(sigma > T::zero() && sigma.is_finite()) {
            return Err(Error::Covariance(format!("noise scale {sigma} must be positive")));
        }
        let mut matrix = vec![T::zero(); dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = sigma * sigma;
        }
        Self::new(matrix, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    /// Lower factor `L` with `Γ = L Lᵀ`.
    pub fn cholesky(&self) -> &[T] {
        &self.chol
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    /// `L⁻¹ r`.
    pub fn whiten<R: Real<T>>(&self, r: &[R]) -> Vec<R> {
        solve_lower(&self.chol, self.dim, r)
    }

    /// `Γ^{1/2} ξ` with the Cholesky square root.
    pub fn color(&self, xi: &[T]) -> Vec<T> {
        lower_mul(&self.chol, self.dim, xi)
    }
}

/// Point sensors plus Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel<T> {
    sensors: Vec<T>,
    noise: NoiseCovariance<T>,
}

impl<T: Scalar> ObservationModel<T> {
    pub fn new(mesh: &IntervalMesh<T>, sensors: Vec<T>, noise: NoiseCovariance<T>) -> Result<Self> {
        check_dim("noise covariance", sensors.len(), noise.dim())?;
        for &x in &sensors {
            mesh.check_contains(x)?;
        }
        Ok(Self { sensors, noise })
    }

    /// Sensors with `Γ = σ² I`.
    pub fn isotropic(mesh: &IntervalMesh<T>, sensors: Vec<T>, sigma: T) -> Result<Self> {
        let d = sensors.len();
        Self::new(mesh, sensors, NoiseCovariance::isotropic(sigma, d)?)
    }

    pub fn sensors(&self) -> &[T] {
        &self.sensors
    }

    pub fn noise(&self) -> &NoiseCovariance<T> {
        &self.noise
    }

    pub fn dim(&self) -> usize {
        self.sensors.len()
    }

    /// Noiseless sensor readings `H(u)` of differentiable coefficients.
    pub fn apply_with<R: Real<T>>(&self, basis: &BasisSet<T>, coeffs: &[R]) -> Result<Vec<R>> {
        check_dim("field coefficients", basis.size(), coeffs.len())?;
        self.sensors.iter().map(|&x| basis.eval_with(coeffs, x)).collect()
    }
}

/// `y_j = u(x_j) + [Γ^{1/2} ξ]_j`; noiseless when `noise_draw` is `None`.
pub fn observe<T: Scalar>(
    u: &FieldCoefficients<T>,
    obs: &ObservationModel<T>,
    noise_draw: Option<&[T]>,
) -> Result<Vec<T>> {
    let mut y = obs.apply_with(u.basis(), u.coeffs())?;
    if let Some(xi) = noise_draw {
        check_dim("noise draw", obs.dim(), xi.len())?;
        for (v, e) in y.iter_mut().zip(obs.noise().color(xi)) {
            *v += e;
        }
    }
    Ok(y)
}

/// `log N(y; mean, Γ)` for differentiable means; `None` when there are no sensors.
pub fn gaussian_log_likelihood_with<T: Scalar, R: Real<T>>(
    y: &[T],
    mean: &[R],
    cov: &NoiseCovariance<T>,
) -> Result<Option<R>> {
    check_dim("observation", cov.dim(), y.len())?;
    check_dim("predicted mean", cov.dim(), mean.len())?;
    if mean.is_empty() {
        return Ok(None);
    }
    let d = cov.dim();
    let constant = -T::of(0.5) * (T::of_usize(d) * T::ln_two_pi() + cov.log_det());
    let diff: Vec<R> = mean.iter().zip(y).map(|(&m, &v)| -m + v).collect();
    let w = cov.whiten(&diff);
    Ok(Some(R::norm_squared(&w) * T::of(-0.5) + constant))
}

/// `log N(y; mean, Γ)` including the normalization constant.
pub fn gaussian_log_likelihood<T: Scalar>(y: &[T], mean: &[T], cov: &NoiseCovariance<T>) -> Result<T> {
    Ok(gaussian_log_likelihood_with(y, mean, cov)?.unwrap_or_else(T::zero))
}
