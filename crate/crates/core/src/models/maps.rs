//! Parameter-to-observable maps: fixed (identity, linear, PDE) or learned (MLP).

use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::models::mlp::MlpShape;
use crate::pde::basis::BasisSet;
use crate::pde::field::SourceField;
use crate::pde::mesh::IntervalMesh;
use crate::pde::observe::ObservationModel;
use crate::pde::residual::{element_conductances, load_vector};
use crate::pde::solve::solve_interior_with;
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// `z ↦ G_θ(z)`; fixed maps have no parameters.
pub trait ForwardModel<T: Scalar> {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn num_params(&self) -> usize {
        0
    }

    fn init_params(&self, _rng: &RandomStream) -> Vec<T> {
        Vec::new()
    }

    fn apply_with<R: Real<T>>(&self, theta: &[R], z: &[R]) -> Result<Vec<R>>;

    fn apply(&self, theta: &[T], z: &[T]) -> Result<Vec<T>> {
        self.apply_with(theta, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityMap {
    pub dim: usize,
}

impl<T: Scalar> ForwardModel<T> for IdentityMap {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn apply_with<R: Real<T>>(&self, _theta: &[R], z: &[R]) -> Result<Vec<R>> {
        check_dim("identity map input", self.dim, z.len())?;
        Ok(z.to_vec())
    }
}

/// `z ↦ A z` with a row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap<T> {
    matrix: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Scalar> LinearMap<T> {
    pub fn new(matrix: Vec<T>, rows: usize, cols: usize) -> Result<Self> {
        check_dim("linear map matrix", rows * cols, matrix.len())?;
        if cols == 0 {
            return Err(Error::Parameter {
                name: "cols",
                reason: "linear map needs at least one input".into(),
            });
        }
        Ok(Self { matrix, rows, cols })
    }

    /// `z ↦ a z` in one dimension.
    pub fn scalar(a: T) -> Self {
        Self {
            matrix: vec![a],
            rows: 1,
            cols: 1,
        }
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

impl<T: Scalar> ForwardModel<T> for LinearMap<T> {
    fn input_dim(&self) -> usize {
        self.cols
    }

    fn output_dim(&self) -> usize {
        self.rows
    }

    fn apply_with<R: Real<T>>(&self, _theta: &[R], z: &[R]) -> Result<Vec<R>> {
        check_dim("linear map input", self.cols, z.len())?;
        Ok((0..self.rows)
            .map(|i| R::dot_const(z, &self.matrix[i * self.cols..(i + 1) * self.cols]))
            .collect())
    }
}

/// A learned map `G_θ` given by a network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpMap {
    pub shape: MlpShape,
}

impl<T: Scalar> ForwardModel<T> for MlpMap {
    fn input_dim(&self) -> usize {
        self.shape.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.shape.output_dim()
    }

    fn num_params(&self) -> usize {
        self.shape.num_params()
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.shape.init(rng)
    }

    fn apply_with<R: Real<T>>(&self, theta: &[R], z: &[R]) -> Result<Vec<R>> {
        self.shape.forward_with(theta, z)
    }
}

/// The finite-element forward map `z ↦ u` (interior nodal values), optionally
/// followed by point observations. With `log_params` the input is `ln z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonMap<T> {
    mesh: IntervalMesh<T>,
    z_basis: BasisSet<T>,
    load: Vec<T>,
    observation: Option<ObservationModel<T>>,
    log_params: bool,
}

impl<T: Scalar> PoissonMap<T> {
    pub fn new(mesh: IntervalMesh<T>, z_basis: BasisSet<T>, f: &SourceField<T>) -> Result<Self> {
        let load = load_vector(&mesh, f)?;
        Ok(Self {
            mesh,
            z_basis,
            load,
            observation: None,
            log_params: false,
        })
    }

    pub fn with_observation(mut self, obs: ObservationModel<T>) -> Self {
        self.observation = Some(obs);
        self
    }

    pub fn with_log_params(mut self) -> Self {
        self.log_params = true;
        self
    }

    pub fn mesh(&self) -> &IntervalMesh<T> {
        &self.mesh
    }

    pub fn z_basis(&self) -> &BasisSet<T> {
        &self.z_basis
    }

    pub fn load(&self) -> &[T] {
        &self.load
    }

    pub fn observation(&self) -> Option<&ObservationModel<T>> {
        self.observation.as_ref()
    }

    pub fn log_params(&self) -> bool {
        self.log_params
    }

    /// Interior nodal solution for (possibly log-) coefficients `z`.
    pub fn solve_with<R: Real<T>>(&self, z: &[R]) -> Result<Vec<R>> {
        check_dim("parameter coefficients", self.z_basis.size(), z.len())?;
        let coeffs: Vec<R> = if self.log_params {
            z.iter().map(|v| v.exp()).collect()
        } else {
            z.to_vec()
        };
        let cond = element_conductances(&self.mesh, &self.z_basis, &coeffs)?;
        if let Some((e, c)) = cond.iter().enumerate().find(|(_, c)| !(c.value() > T::zero())) {
            return Err(Error::Ellipticity {
                x: self.mesh.node(e).to_f64_lossy(),
                value: c.value().to_f64_lossy(),
            });
        }
        Ok(solve_interior_with(&cond, &self.load))
    }
}

impl<T: Scalar> ForwardModel<T> for PoissonMap<T> {
    fn input_dim(&self) -> usize {
        self.z_basis.size()
    }

    fn output_dim(&self) -> usize {
        match &self.observation {
            Some(o) => o.dim(),
            None => self.mesh.num_interior(),
        }
    }

    fn apply_with<R: Real<T>>(&self, _theta: &[R], z: &[R]) -> Result<Vec<R>> {
        let interior = self.solve_with(z)?;
        let Some(obs) = &self.observation else {
            return Ok(interior);
        };
        let zero = z[0].zero_like();
        let mut full = Vec::with_capacity(self.mesh.num_nodes());
        full.push(zero);
        full.extend(interior);
        full.push(zero);
        obs.apply_with(&BasisSet::hat(self.mesh.clone()), &full)
    }
}
