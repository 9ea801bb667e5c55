use crate::autodiff::Real;
use crate::error::{check_dim, Result};
use crate::linalg::solve_tridiagonal;
use crate::pde::basis::BasisSet;
use crate::pde::field::{FieldCoefficients, SourceField};
use crate::pde::mesh::IntervalMesh;
use crate::pde::residual::{check_ellipticity, element_conductances, load_vector};
use crate::scalar::Scalar;

/// Interior nodal values of the discrete solution for conductances `c` and load `F`.
///
/// Solves `K u = -F` where `K` is the tridiagonal stiffness of the interior
/// nodes; row `i` is `(c_{i-1} + c_i) u_i - c_{i-1} u_{i-1} - c_i u_{i+1}`.
pub fn solve_interior_with<T: Scalar, R: Real<T>>(conductance: &[R], load: &[T]) -> Vec<R> {
    let n = load.len();
    if n == 0 {
        return Vec::new();
    }
    let diag: Vec<R> = (0..n).map(|k| conductance[k] + conductance[k + 1]).collect();
    let lower: Vec<R> = (0..n).map(|k| -conductance[k]).collect();
    let upper: Vec<R> = (0..n).map(|k| -conductance[k + 1]).collect();
    let rhs: Vec<R> = (0..n).map(|k| diag[k].lift(-load[k])).collect();
    solve_tridiagonal(&lower, &diag, &upper, &rhs)
}

/// Differentiable parameter-to-solution map: interior nodal values for coefficients `z`.
pub fn solve_with<T: Scalar, R: Real<T>>(
    mesh: &IntervalMesh<T>,
    z_basis: &BasisSet<T>,
    z: &[R],
    load: &[T],
) -> Result<Vec<R>> {
    check_dim("load vector", mesh.num_interior(), load.len())?;
    let cond = element_conductances(mesh, z_basis, z)?;
    Ok(solve_interior_with(&cond, load))
}

/// Exact finite-element forward solve on hat functions with homogeneous Dirichlet ends.
pub fn solve_poisson_fem<T: Scalar>(
    z: &FieldCoefficients<T>,
    f: &SourceField<T>,
    mesh: &IntervalMesh<T>,
) -> Result<FieldCoefficients<T>> {
    check_ellipticity(mesh, z.basis(), z.coeffs())?;
    let load = load_vector(mesh, f)?;
    let interior = solve_with(mesh, z.basis(), z.coeffs(), &load)?;
    FieldCoefficients::from_interior(mesh.clone(), &interior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::pde::residual::assemble_weak_residual;

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let mesh = IntervalMesh::<f64>::unit(9).unwrap();
        let z = FieldCoefficients::interpolant(BasisSet::per_element(mesh.clone()), |x| 1.0 + x).unwrap();
        let u = solve_poisson_fem(&z, &SourceField::Constant(0.0), &mesh).unwrap();
        assert!(u.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_is_reproduced_nodally() {
        let mesh = IntervalMesh::<f64>::unit(11).unwrap();
        let z = FieldCoefficients::constant(BasisSet::per_element(mesh.clone()), 1.0);
        let u = solve_poisson_fem(&z, &SourceField::Constant(-2.0), &mesh).unwrap();
        for (x, v) in mesh.nodes().into_iter().zip(u.coeffs()) {
            assert!((v - x * (1.0 - x)).abs() < 1e-10);
        }
        assert!(u.satisfies_dirichlet());
    }

    #[test]
    fn solution_zeroes_weak_residual() {
        let mesh = IntervalMesh::<f64>::unit(17).unwrap();
        let z = FieldCoefficients::interpolant(BasisSet::per_element(mesh.clone()), |x| 0.5 + x * x).unwrap();
        let f = SourceField::function(|x: f64| (3.0 * x).cos() - 1.0);
        let u = solve_poisson_fem(&z, &f, &mesh).unwrap();
        let r = assemble_weak_residual(&u, &z, &f, &BasisSet::hat(mesh)).unwrap();
        assert!(r.norm_inf() < 1e-12);
    }

    #[test]
    fn rejects_non_elliptic_coefficients() {
        let mesh = IntervalMesh::<f64>::unit(5).unwrap();
        let z = FieldCoefficients::new(BasisSet::per_element(mesh.clone()), vec![1.0, -0.5, 1.0, 1.0]).unwrap();
        assert!(matches!(
            solve_poisson_fem(&z, &SourceField::Constant(1.0), &mesh),
            Err(Error::Ellipticity { .. })
        ));
    }

    #[test]
    fn two_node_mesh_has_no_unknowns() {
        let mesh = IntervalMesh::<f64>::unit(2).unwrap();
        let z = FieldCoefficients::constant(BasisSet::per_element(mesh.clone()), 1.0);
        let u = solve_poisson_fem(&z, &SourceField::Constant(-2.0), &mesh).unwrap();
        assert_eq!(u.coeffs(), &[0.0, 0.0]);
    }

    #[test]
    fn single_precision_solve() {
        let mesh = IntervalMesh::<f32>::unit(9).unwrap();
        let z = FieldCoefficients::constant(BasisSet::per_element(mesh.clone()), 1.0);
        let u = solve_poisson_fem(&z, &SourceField::Constant(-2.0), &mesh).unwrap();
        assert!((u.interpolate(0.5).unwrap() - 0.25).abs() < 1e-5);
    }
}
