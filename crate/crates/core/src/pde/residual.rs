//! Weighted-residual assembly for `∇·(z ∇u) = f` with homogeneous Dirichlet data.
//!
//! Weak form: `r_i = -∫ v_i' z u' dx - ∫ v_i f dx` over interior hat tests,
//! integrated with two-point Gauss–Legendre per element.
//! Collocation: `r_i = z(x_i) u''(x_i) + z'(x_i) u'(x_i) - f(x_i)`.

use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::pde::basis::BasisSet;
use crate::pde::field::{FieldCoefficients, SourceField, TrialField};
use crate::pde::mesh::IntervalMesh;
use crate::scalar::Scalar;

/// Which test functions produced a residual.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunctions<T> {
    /// Interior hat functions of a mesh (weak form).
    InteriorHats { count: usize },
    /// Dirac deltas at collocation points (strong form).
    Dirac { points: Vec<T> },
}

/// Tested residual `r = {r_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector<T> {
    values: Vec<T>,
    tests: TestFunctions<T>,
}

impl<T: Scalar> ResidualVector<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn tests(&self) -> &TestFunctions<T> {
        &self.tests
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_squared(&self) -> T {
        self.values.iter().map(|&r| r * r).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn norm_inf(&self) -> T {
        self.values.iter().fold(T::zero(), |m, r| m.max(r.abs()))
    }
}

fn check_same_domain<T: Scalar>(mesh: &IntervalMesh<T>, other: &IntervalMesh<T>, what: &str) -> Result<()> {
    if mesh.a() == other.a() && mesh.b() == other.b() {
        Ok(())
    } else {
        Err(Error::Incompatible(format!(
            "{what} lives on [{}, {}] but the mesh spans [{}, {}]",
            other.a(),
            other.b(),
            mesh.a(),
            mesh.b()
        )))
    }
}

/// Rejects parameter fields that are not strictly positive at every quadrature point.
pub fn check_ellipticity<T: Scalar>(mesh: &IntervalMesh<T>, z_basis: &BasisSet<T>, z: &[T]) -> Result<()> {
    check_same_domain(mesh, z_basis.mesh(), "parameter field")?;
    check_dim("parameter coefficients", z_basis.size(), z.len())?;
    for e in 0..mesh.num_elements() {
        for x in mesh.gauss_points(e) {
            let v: T = z_basis.eval_with(z, x)?;
            if !(v > T::zero()) {
                return Err(Error::Ellipticity {
                    x: x.to_f64_lossy(),
                    value: v.to_f64_lossy(),
                });
            }
        }
    }
    Ok(())
}

/// Element conductances `c_e = (1/h²) ∫_e z dx` (the stiffness scale of element `e`).
pub fn element_conductances<T: Scalar, R: Real<T>>(
    mesh: &IntervalMesh<T>,
    z_basis: &BasisSet<T>,
    z: &[R],
) -> Result<Vec<R>> {
    check_same_domain(mesh, z_basis.mesh(), "parameter field")?;
    check_dim("parameter coefficients", z_basis.size(), z.len())?;
    let h = mesh.h();
    let scale = T::of(0.5) / h;
    (0..mesh.num_elements())
        .map(|e| {
            let [q0, q1] = mesh.gauss_points(e);
            let z0 = z_basis.eval_with(z, q0)?;
            let z1 = z_basis.eval_with(z, q1)?;
            Ok((z0 + z1) * scale)
        })
        .collect()
}

/// Load `F_i = ∫ φ_i f dx` for each interior node.
pub fn load_vector<T: Scalar>(mesh: &IntervalMesh<T>, f: &SourceField<T>) -> Result<Vec<T>> {
    let n = mesh.num_nodes();
    let mut full = vec![T::zero(); n];
    if f.is_zero() {
        return Ok(full[1..n - 1].to_vec());
    }
    let h = mesh.h();
    let half = h * T::of(0.5);
    for e in 0..mesh.num_elements() {
        let left = mesh.node(e);
        for q in mesh.gauss_points(e) {
            let fq = f.eval(q)?;
            let t = (q - left) / h;
            full[e] += half * fq * (T::one() - t);
            full[e + 1] += half * fq * t;
        }
    }
    Ok(full[1..n - 1].to_vec())
}

/// Weak residual from nodal values (boundary included), conductances, and load.
pub fn weak_residual_with<T: Scalar, R: Real<T>>(u_full: &[R], conductance: &[R], load: &[T]) -> Vec<R> {
    let flux: Vec<R> = conductance
        .iter()
        .enumerate()
        .map(|(e, &c)| c * (u_full[e + 1] - u_full[e]))
        .collect();
    load.iter()
        .enumerate()
        .map(|(k, &f)| flux[k + 1] - flux[k] - f)
        .collect()
}

/// Weak-form residual of a hat-basis trial field tested against interior hats.
pub fn assemble_weak_residual<T: Scalar>(
    u: &FieldCoefficients<T>,
    z: &FieldCoefficients<T>,
    f: &SourceField<T>,
    tests: &BasisSet<T>,
) -> Result<ResidualVector<T>> {
    if !u.basis().is_hat() || !tests.is_hat() {
        return Err(Error::UnsupportedRepresentation(
            "weak residual needs hat-basis trial and test functions".into(),
        ));
    }
    if !u.mesh().same_as(tests.mesh()) {
        return Err(Error::Incompatible("trial and test meshes differ".into()));
    }
    let mesh = u.mesh();
    let cond = element_conductances(mesh, z.basis(), z.coeffs())?;
    let load = load_vector(mesh, f)?;
    let values = weak_residual_with(u.coeffs(), &cond, &load);
    Ok(ResidualVector {
        tests: TestFunctions::InteriorHats { count: values.len() },
        values,
    })
}

/// Collocation residual from pointwise jets `(u, u', u'')` of the trial field.
pub fn strong_residual_with<T: Scalar, R: Real<T>>(
    jets: &[(R, R, R)],
    z_basis: &BasisSet<T>,
    z: &[R],
    f: &SourceField<T>,
    points: &[T],
) -> Result<Vec<R>> {
    check_dim("collocation jets", points.len(), jets.len())?;
    check_dim("parameter coefficients", z_basis.size(), z.len())?;
    points
        .iter()
        .zip(jets)
        .map(|(&x, &(_, du, d2u))| {
            let zx = z_basis.eval_with(z, x)?;
            let mut r = zx * d2u;
            if let Some(dz) = z_basis.derivative_with(z, x)? {
                r = r + dz * du;
            }
            Ok(r - f.eval(x)?)
        })
        .collect()
}

/// Strong-form residual at collocation points (Dirac test functions).
pub fn assemble_strong_residual<T: Scalar>(
    u: TrialField<'_, T>,
    z: &FieldCoefficients<T>,
    f: &SourceField<T>,
    points: &[T],
) -> Result<ResidualVector<T>> {
    let field = match u {
        TrialField::Smooth(field) => field,
        TrialField::Coefficients(c) => {
            return Err(Error::UnsupportedRepresentation(format!(
                "{:?} coefficients have no pointwise second derivative (it vanishes element-wise)",
                c.basis().kind()
            )))
        }
    };
    for &x in points {
        z.mesh().check_contains(x)?;
    }
    let jets = points
        .iter()
        .map(|&x| field.jet(x))
        .collect::<Result<Vec<_>>>()?;
    let values = strong_residual_with(&jets, z.basis(), z.coeffs(), f, points)?;
    Ok(ResidualVector {
        values,
        tests: TestFunctions::Dirac {
            points: points.to_vec(),
        },
    })
}
