//! Physics-informed likelihoods built from discretized PDE residuals, and the
//! data-free / small-data variational objectives that use them.

use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::models::encoder::AmortizedGaussian;
use crate::models::params::ParamLayout;
use crate::models::pinn::PinnField;
use crate::objectives::bayes::BayesVi;
use crate::objectives::likelihood::Likelihood;
use crate::objectives::{check_positive, check_samples, mc_mean, Loss, Objective};
use crate::pde::basis::BasisSet;
use crate::pde::field::SourceField;
use crate::pde::mesh::IntervalMesh;
use crate::pde::observe::{gaussian_log_likelihood_with, ObservationModel};
use crate::pde::residual::{element_conductances, load_vector, strong_residual_with, weak_residual_with};
use crate::pde::solve::solve_with;
use crate::prob::family::{MeanField, VariationalFamily};
use crate::prob::gaussian::Gaussian;
use crate::prob::prior::{Prior, ProductPrior};
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// How the trial field `u` is represented and tested.
#[derive(Debug, Clone, PartialEq)]
pub enum Assembler<T> {
    /// Interior nodal values on hat functions, tested against interior hats.
    Weak,
    /// A PINN trial field tested with Dirac deltas at collocation points.
    Collocation { pinn: PinnField<T>, points: Vec<T> },
}

/// Residual `r(u, z)` of `∇·(z∇u) = f` with homogeneous Dirichlet ends.
#[derive(Debug, Clone)]
pub struct ResidualModel<T> {
    mesh: IntervalMesh<T>,
    z_basis: BasisSet<T>,
    hat: BasisSet<T>,
    source: SourceField<T>,
    load: Vec<T>,
    assembler: Assembler<T>,
    log_params: bool,
}

impl<T: Scalar> ResidualModel<T> {
    pub fn new(mesh: IntervalMesh<T>, z_basis: BasisSet<T>, source: SourceField<T>) -> Result<Self> {
        if !mesh.same_as(z_basis.mesh()) {
            return Err(Error::Incompatible("parameter basis lives on a different mesh".into()));
        }
        if mesh.num_interior() == 0 {
            return Err(Error::Parameter {
                name: "mesh",
                reason: "need at least one interior node".into(),
            });
        }
        let load = load_vector(&mesh, &source)?;
        Ok(Self {
            hat: BasisSet::hat(mesh.clone()),
            mesh,
            z_basis,
            source,
            load,
            assembler: Assembler::Weak,
            log_params: false,
        })
    }

    /// Switches to a PINN trial field with collocation points.
    pub fn with_collocation(mut self, pinn: PinnField<T>, points: Vec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter {
                name: "points",
                reason: "need at least one collocation point".into(),
            });
        }
        for &x in &points {
            self.mesh.check_contains(x)?;
        }
        self.assembler = Assembler::Collocation { pinn, points };
        Ok(self)
    }

    /// Interprets parameter coefficients as `ln z`.
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

    pub fn source(&self) -> &SourceField<T> {
        &self.source
    }

    pub fn assembler(&self) -> &Assembler<T> {
        &self.assembler
    }

    pub fn log_params(&self) -> bool {
        self.log_params
    }

    /// Length of the trial vector: interior nodes, or PINN parameters.
    pub fn u_dim(&self) -> usize {
        match &self.assembler {
            Assembler::Weak => self.mesh.num_interior(),
            Assembler::Collocation { pinn, .. } => pinn.num_params(),
        }
    }

    pub fn z_dim(&self) -> usize {
        self.z_basis.size()
    }

    pub fn residual_dim(&self) -> usize {
        match &self.assembler {
            Assembler::Weak => self.mesh.num_interior(),
            Assembler::Collocation { points, .. } => points.len(),
        }
    }

    /// Physical coefficients of `z` (exponentiated under log parameters).
    pub fn physical_z<R: Real<T>>(&self, z: &[R]) -> Vec<R> {
        if self.log_params {
            z.iter().map(|v| v.exp()).collect()
        } else {
            z.to_vec()
        }
    }

    pub fn residual_with<R: Real<T>>(&self, u: &[R], z: &[R]) -> Result<Vec<R>> {
        check_dim("trial vector", self.u_dim(), u.len())?;
        check_dim("parameter coefficients", self.z_dim(), z.len())?;
        let zp = self.physical_z(z);
        match &self.assembler {
            Assembler::Weak => {
                let cond = element_conductances(&self.mesh, &self.z_basis, &zp)?;
                Ok(weak_residual_with(&self.nodal_with(u), &cond, &self.load))
            }
            Assembler::Collocation { pinn, points } => {
                let jets = points
                    .iter()
                    .map(|&x| pinn.jet_with(u, x))
                    .collect::<Result<Vec<_>>>()?;
                strong_residual_with(&jets, &self.z_basis, &zp, &self.source, points)
            }
        }
    }

    pub fn residual_norm_squared_with<R: Real<T>>(&self, u: &[R], z: &[R]) -> Result<R> {
        Ok(R::norm_squared(&self.residual_with(u, z)?))
    }

    /// Nodal values including the zero boundary values (weak representation only).
    fn nodal_with<R: Real<T>>(&self, u: &[R]) -> Vec<R> {
        let zero = u[0].zero_like();
        let mut full = Vec::with_capacity(u.len() + 2);
        full.push(zero);
        full.extend_from_slice(u);
        full.push(zero);
        full
    }

    /// Trial field values at the sensors of `obs`.
    pub fn observe_with<R: Real<T>>(&self, u: &[R], obs: &ObservationModel<T>) -> Result<Vec<R>> {
        check_dim("trial vector", self.u_dim(), u.len())?;
        match &self.assembler {
            Assembler::Weak => obs.apply_with(&self.hat, &self.nodal_with(u)),
            Assembler::Collocation { pinn, .. } => obs.sensors().iter().map(|&x| pinn.value_with(u, x)).collect(),
        }
    }

    /// Interior FEM solution for coefficients `z` (in this model's parameterization).
    pub fn solve(&self, z: &[T]) -> Result<Vec<T>> {
        let zp = self.physical_z(z);
        crate::pde::residual::check_ellipticity(&self.mesh, &self.z_basis, &zp)?;
        solve_with(&self.mesh, &self.z_basis, &zp, &self.load)
    }
}

impl<T: Scalar> ResidualModel<T> {
    /// `(C, u₀)` with `C Cᵀ = K(z_ref)⁻¹` and `u₀` the FEM solution at `z_ref`.
    ///
    /// Pushing a trial density through `u = C v + u₀` makes the weak residual
    /// roughly isotropic in `v`, which keeps amortized surrogates well conditioned.
    pub fn reference_affine(&self, z_ref: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        if !matches!(self.assembler, Assembler::Weak) {
            return Err(Error::UnsupportedRepresentation(
                "reference stiffness needs the nodal trial representation".into(),
            ));
        }
        let zp = self.physical_z(z_ref);
        crate::pde::residual::check_ellipticity(&self.mesh, &self.z_basis, &zp)?;
        let cond = element_conductances(&self.mesh, &self.z_basis, &zp)?;
        let n = self.mesh.num_interior();
        let mut inv = vec![T::zero(); n * n];
        for j in 0..n {
            let mut load = vec![T::zero(); n];
            load[j] = -T::one();
            for (i, v) in crate::pde::solve::solve_interior_with(&cond, &load).into_iter().enumerate() {
                inv[i * n + j] = v;
            }
        }
        let lower = crate::linalg::cholesky(&inv, n)?;
        Ok((lower, self.solve(z_ref)?))
    }
}

/// Zero-valued virtual observation `r̂ = 0` of the residual with noise `σ_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualObservable<T> {
    pub sigma_r: T,
}

impl<T: Scalar> VirtualObservable<T> {
    pub fn new(sigma_r: T) -> Result<Self> {
        check_positive("sigma_r", sigma_r)?;
        Ok(Self { sigma_r })
    }

    /// `β = 1 / (2σ_r²)`.
    pub fn beta(&self) -> T {
        T::one() / (T::of(2.0) * self.sigma_r * self.sigma_r)
    }

    /// `log N(0; r, σ_r² I)` without its normalizer.
    pub fn log_likelihood_with<R: Real<T>>(&self, r: &[R]) -> R {
        -R::norm_squared(r) * self.beta()
    }

    /// `−(d_r/2) ln(2π σ_r²)`.
    pub fn log_normalizer(&self, d_r: usize) -> T {
        -T::of_usize(d_r) * T::of(0.5) * (T::ln_two_pi() + (self.sigma_r * self.sigma_r).ln())
    }
}

/// `−β ‖r(u, z)‖²`, the unnormalized physics log-likelihood.
pub fn residual_log_likelihood<T: Scalar>(model: &ResidualModel<T>, u: &[T], z: &[T], beta: T) -> Result<T> {
    Ok(-model.residual_norm_squared_with(u, z)? * beta)
}

/// `log p(r̂=0 | u, z) + log p(y | u)` with the residual term unnormalized.
pub fn small_data_product_likelihood<T: Scalar>(
    model: &ResidualModel<T>,
    u: &[T],
    z: &[T],
    y: &[T],
    obs: &ObservationModel<T>,
    vo: &VirtualObservable<T>,
) -> Result<T> {
    let physics = residual_log_likelihood(model, u, z, vo.beta())?;
    let pred = model.observe_with(u, obs)?;
    Ok(physics + gaussian_log_likelihood_with(y, &pred, obs.noise())?.unwrap_or(T::zero()))
}

/// The product likelihood over the stacked latent `[u, z]`.
#[derive(Debug, Clone)]
pub struct SmallDataLikelihood<T> {
    pub model: ResidualModel<T>,
    pub obs: ObservationModel<T>,
    pub vo: VirtualObservable<T>,
}

impl<T: Scalar> Likelihood<T> for SmallDataLikelihood<T> {
    fn latent_dim(&self) -> usize {
        self.model.u_dim() + self.model.z_dim()
    }

    fn log_likelihood_with<R: Real<T>>(&self, _theta: &[R], x: &[R], y: &[T]) -> Result<R> {
        check_dim("latent", self.latent_dim(), x.len())?;
        let (u, z) = x.split_at(self.model.u_dim());
        let physics = self.vo.log_likelihood_with(&self.model.residual_with(u, z)?);
        let pred = self.model.observe_with(u, &self.obs)?;
        Ok(match gaussian_log_likelihood_with(y, &pred, self.obs.noise())? {
            Some(ll) => physics + ll,
            None => physics,
        })
    }
}

/// `E_{p(z)} E_{q_φ(u|z)} [log q_φ(u|z) + β ‖r(u, z)‖²]`, the data-free reverse KL
/// up to a `φ`-independent constant.
///
/// `z` is drawn in the model's parameterization and passed to `q` as conditioning.
#[derive(Debug, Clone)]
pub struct DataFreeRkl<Q, P, T> {
    pub model: ResidualModel<T>,
    pub family: Q,
    pub prior: P,
    pub beta: T,
    pub samples: usize,
    pub log_target_offset: T,
}

fn check_conditional<T: Scalar, Q: VariationalFamily<T>, P: Prior<T>>(
    model: &ResidualModel<T>,
    family: &Q,
    prior: &P,
) -> Result<()> {
    check_dim("trial dimension", model.u_dim(), family.dim())?;
    check_dim("conditioning dimension", model.z_dim(), family.cond_dim())?;
    check_dim("parameter prior", model.z_dim(), prior.dim())
}

impl<T: Scalar, Q: VariationalFamily<T>, P: Prior<T>> DataFreeRkl<Q, P, T> {
    pub fn new(model: ResidualModel<T>, family: Q, prior: P, beta: T, samples: usize) -> Result<Self> {
        check_samples(samples)?;
        check_positive("beta", beta)?;
        check_conditional(&model, &family, &prior)?;
        Ok(Self {
            model,
            family,
            prior,
            beta,
            samples,
            log_target_offset: T::zero(),
        })
    }

    pub fn with_log_target_offset(mut self, c: T) -> Self {
        self.log_target_offset = c;
        self
    }

    /// `E ‖r(u, z)‖` under `q_φ(u|z) p(z)` with the evaluation's frozen noise.
    pub fn mean_residual_norm(&self, params: &[T], noise: &RandomStream) -> Result<T> {
        let mut acc = T::zero();
        for s in 0..self.samples {
            let (z, u, _) = draw(&self.family, &self.prior, params, &noise.substream(s as u64))?;
            acc += self.model.residual_norm_squared_with(&u, &z)?.sqrt();
        }
        Ok(acc / T::of_usize(self.samples))
    }
}

/// `z ~ p(z)`, then `u ~ q_φ(u|z)`, from one substream.
fn draw<T: Scalar, R: Real<T>, Q: VariationalFamily<T>, P: Prior<T>>(
    family: &Q,
    prior: &P,
    params: &[R],
    stream: &RandomStream,
) -> Result<(Vec<T>, Vec<R>, R)> {
    let mut g = stream.generator();
    let z = prior.sample(&mut g);
    let eps = g.normals(family.dim());
    let (u, lq) = family.sample_with(params, &eps, &z)?;
    Ok((z, u, lq))
}

impl<T: Scalar, Q: VariationalFamily<T>, P: Prior<T>> Objective<T> for DataFreeRkl<Q, P, T> {
    fn name(&self) -> &'static str {
        "data_free_rkl"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new().with("phi", self.family.num_params())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.family.init_params(rng)
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        let mut terms = Vec::with_capacity(self.samples);
        for s in 0..self.samples {
            let (z, u, lq) = draw(&self.family, &self.prior, params, &noise.substream(s as u64))?;
            let zr: Vec<R> = z.iter().map(|&v| lq.lift(v)).collect();
            let physics = self.model.residual_norm_squared_with(&u, &zr)? * self.beta;
            terms.push(lq + physics - self.log_target_offset);
        }
        Ok(mc_mean(&terms))
    }
}

/// Negated data-free ELBO over `[φ, θ]`:
/// `−E_{q_φ(u|z)p(z)}[log p(r̂=0|u,z) + log p_θ(z|u) + log p(u) − log q_φ(u|z) − log p(z)]`.
///
/// The virtual-observable term is normalized, so the (un-negated) value bounds
/// `log p(r̂ = 0)` from below.
#[derive(Debug, Clone)]
pub struct DataFreeElbo<Q, P, T> {
    pub model: ResidualModel<T>,
    pub family: Q,
    pub inverse: AmortizedGaussian,
    pub prior_u: Gaussian<T>,
    pub prior_z: P,
    pub vo: VirtualObservable<T>,
    pub samples: usize,
}

impl<T: Scalar, Q: VariationalFamily<T>, P: Prior<T>> DataFreeElbo<Q, P, T> {
    pub fn new(
        model: ResidualModel<T>,
        family: Q,
        inverse: AmortizedGaussian,
        prior_u: Gaussian<T>,
        prior_z: P,
        vo: VirtualObservable<T>,
        samples: usize,
    ) -> Result<Self> {
        check_samples(samples)?;
        check_conditional(&model, &family, &prior_z)?;
        check_dim("inverse model output", model.z_dim(), VariationalFamily::<T>::dim(&inverse))?;
        check_dim("inverse model input", model.u_dim(), VariationalFamily::<T>::cond_dim(&inverse))?;
        check_dim("trial prior", model.u_dim(), prior_u.dim())?;
        Ok(Self {
            model,
            family,
            inverse,
            prior_u,
            prior_z,
            vo,
            samples,
        })
    }

    fn split<'a, R>(&self, params: &'a [R]) -> Result<(&'a [R], &'a [R])> {
        check_dim("data-free ELBO parameters", self.layout().len(), params.len())?;
        Ok(params.split_at(self.family.num_params()))
    }

    /// Mean and standard deviation of `p_θ(z | u)` for a given trial vector.
    pub fn inverse_moments(&self, params: &[T], u: &[T]) -> Result<Gaussian<T>> {
        let (_, theta) = self.split(params)?;
        self.inverse.moments_const_with(theta, u)?.to_gaussian()
    }
}

impl<T: Scalar, Q: VariationalFamily<T>, P: Prior<T>> Objective<T> for DataFreeElbo<Q, P, T> {
    fn name(&self) -> &'static str {
        "data_free_elbo"
    }

    fn layout(&self) -> ParamLayout {
        ParamLayout::new()
            .with("phi", self.family.num_params())
            .with("theta", self.inverse.num_params())
    }

    fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        let mut p = self.family.init_params(&rng.substream(0));
        p.extend(VariationalFamily::<T>::init_params(&self.inverse, &rng.substream(1)));
        p
    }

    fn loss_with<R: Real<T>>(&self, params: &[R], noise: &RandomStream) -> Result<Loss<R, T>> {
        let (phi, theta) = self.split(params)?;
        let norm = self.vo.log_normalizer(self.model.residual_dim());
        let mut terms = Vec::with_capacity(self.samples);
        for s in 0..self.samples {
            let (z, u, lq) = draw(&self.family, &self.prior_z, phi, &noise.substream(s as u64))?;
            let zr: Vec<R> = z.iter().map(|&v| lq.lift(v)).collect();
            let physics = self.vo.log_likelihood_with(&self.model.residual_with(&u, &zr)?) + norm;
            let inverse = self.inverse.moments_with(theta, &u)?.log_density(&zr);
            let lpu = self.prior_u.log_density_with(&u);
            let lpz: T = self.prior_z.log_density_with(&z);
            terms.push(lq + lpz - physics - inverse - lpu);
        }
        Ok(mc_mean(&terms))
    }
}

/// Mean-field `q(u) q(z)` Bayes VI against `p(u, z | y, r̂ = 0)`.
pub type MeanFieldSmallData<A, B, P, T> = BayesVi<MeanField<A, B>, SmallDataLikelihood<T>, ProductPrior<Gaussian<T>, P>, T>;

impl<T: Scalar, A: VariationalFamily<T>, B: VariationalFamily<T>, P: Prior<T>> MeanFieldSmallData<A, B, P, T> {
    #[allow(clippy::too_many_arguments)]
    pub fn small_data(
        model: ResidualModel<T>,
        q_u: A,
        q_z: B,
        obs: ObservationModel<T>,
        vo: VirtualObservable<T>,
        prior_u: Gaussian<T>,
        prior_z: P,
        y: Vec<T>,
        samples: usize,
    ) -> Result<Self> {
        check_dim("data", obs.dim(), y.len())?;
        check_dim("trial factor", model.u_dim(), q_u.dim())?;
        check_dim("parameter factor", model.z_dim(), q_z.dim())?;
        BayesVi::new(
            MeanField::new(q_u, q_z),
            SmallDataLikelihood { model, obs, vo },
            ProductPrior {
                first: prior_u,
                second: prior_z,
            },
            y,
            samples,
        )
    }
}
