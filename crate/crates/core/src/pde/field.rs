use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::pde::basis::{BasisKind, BasisSet};
use crate::pde::mesh::IntervalMesh;
use crate::scalar::Scalar;

/// A coefficient vector together with the basis that interprets it.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCoefficients<T> {
    basis: BasisSet<T>,
    coeffs: Vec<T>,
}

impl<T: Scalar> FieldCoefficients<T> {
    pub fn new(basis: BasisSet<T>, coeffs: Vec<T>) -> Result<Self> {
        check_dim("field coefficients", basis.size(), coeffs.len())?;
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: BasisSet<T>) -> Self {
        let n = basis.size();
        Self {
            basis,
            coeffs: vec![T::zero(); n],
        }
    }

    pub fn constant(basis: BasisSet<T>, value: T) -> Self {
        let n = basis.size();
        Self {
            basis,
            coeffs: vec![value; n],
        }
    }

    /// Hat-basis field with zero boundary values and the given interior values.
    pub fn from_interior(mesh: IntervalMesh<T>, interior: &[T]) -> Result<Self> {
        check_dim("interior values", mesh.num_interior(), interior.len())?;
        let mut coeffs = Vec::with_capacity(mesh.num_nodes());
        coeffs.push(T::zero());
        coeffs.extend_from_slice(interior);
        coeffs.push(T::zero());
        Ok(Self {
            basis: BasisSet::hat(mesh),
            coeffs,
        })
    }

    /// Nodal interpolant (hat basis) or cell-midpoint sample (piecewise constant) of `f`.
    pub fn interpolant(basis: BasisSet<T>, f: impl Fn(T) -> T) -> Result<Self> {
        let mesh = basis.mesh().clone();
        let coeffs = match basis.kind() {
            BasisKind::Hat => mesh.nodes().into_iter().map(&f).collect(),
            BasisKind::PiecewiseConstant { cells } => {
                let w = (mesh.b() - mesh.a()) / T::of_usize(*cells);
                (0..*cells)
                    .map(|c| f(mesh.a() + w * (T::of_usize(c) + T::of(0.5))))
                    .collect()
            }
            BasisKind::Collocation { points } => points.iter().copied().map(&f).collect(),
        };
        Ok(Self { basis, coeffs })
    }

    pub fn basis(&self) -> &BasisSet<T> {
        &self.basis
    }

    pub fn mesh(&self) -> &IntervalMesh<T> {
        self.basis.mesh()
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    /// Interior nodal values of a hat-basis field.
    pub fn interior(&self) -> &[T] {
        let n = self.coeffs.len();
        if n <= 2 {
            &[]
        } else {
            &self.coeffs[1..n - 1]
        }
    }

    /// Whether a hat-basis field satisfies homogeneous Dirichlet conditions exactly.
    pub fn satisfies_dirichlet(&self) -> bool {
        self.basis.is_hat()
            && self.coeffs.first() == Some(&T::zero())
            && self.coeffs.last() == Some(&T::zero())
    }

    /// `Σ_i c_i φ_i(x)`.
    pub fn interpolate(&self, x: T) -> Result<T> {
        self.basis.eval_with(&self.coeffs, x)
    }

    /// `∫ (field)² dx` with two-point Gauss quadrature on the owning mesh.
    pub fn l2_norm_squared(&self) -> Result<T> {
        let mesh = self.mesh();
        let half = mesh.h() * T::of(0.5);
        let mut s = T::zero();
        for e in 0..mesh.num_elements() {
            for q in mesh.gauss_points(e) {
                let v = self.interpolate(q)?;
                s += half * v * v;
            }
        }
        Ok(s)
    }
}

/// Right-hand side `f` of the Poisson problem.
#[derive(Clone)]
pub enum SourceField<T> {
    Constant(T),
    Function(Arc<dyn Fn(T) -> T + Send + Sync>),
    Field(FieldCoefficients<T>),
}

impl<T: Scalar> SourceField<T> {
    pub fn function(f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn eval(&self, x: T) -> Result<T> {
        let v = match self {
            Self::Constant(c) => *c,
            Self::Function(f) => f(x),
            Self::Field(field) => field.interpolate(x)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric {
                context: "source field",
                layer: None,
            })
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Constant(c) if *c == T::zero())
    }
}

impl<T: fmt::Debug> fmt::Debug for SourceField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Self::Function(_) => f.write_str("Function(..)"),
            Self::Field(c) => f.debug_tuple("Field").field(c).finish(),
        }
    }
}

/// A trial field with pointwise second derivatives, as required by strong-form collocation.
pub trait SmoothField<T: Scalar> {
    /// `(u(x), u'(x), u''(x))`.
    fn jet(&self, x: T) -> Result<(T, T, T)>;
}

type Closure<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// A closed-form trial field given by its value and first two derivatives.
#[derive(Clone)]
pub struct AnalyticField<T> {
    value: Closure<T>,
    first: Closure<T>,
    second: Closure<T>,
}

impl<T: Scalar> AnalyticField<T> {
    pub fn new(
        value: impl Fn(T) -> T + Send + Sync + 'static,
        first: impl Fn(T) -> T + Send + Sync + 'static,
        second: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            first: Arc::new(first),
            second: Arc::new(second),
        }
    }
}

impl<T: Scalar> SmoothField<T> for AnalyticField<T> {
    fn jet(&self, x: T) -> Result<(T, T, T)> {
        Ok(((self.value)(x), (self.first)(x), (self.second)(x)))
    }
}

/// The representation of a candidate solution handed to a residual assembler.
#[derive(Clone, Copy)]
pub enum TrialField<'a, T> {
    Coefficients(&'a FieldCoefficients<T>),
    Smooth(&'a dyn SmoothField<T>),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_interpolates_to_zero() {
        let basis = BasisSet::hat(IntervalMesh::<f64>::unit(5).unwrap());
        let u = FieldCoefficients::zeros(basis);
        assert_eq!(u.interpolate(0.37).unwrap(), 0.0);
        assert!(u.satisfies_dirichlet());
    }

    #[test]
    fn single_hat_evaluates_by_hand() {
        let basis = BasisSet::hat(IntervalMesh::<f64>::unit(3).unwrap());
        let u = FieldCoefficients::new(basis, vec![0.0, 1.0, 0.0]).unwrap();
        assert!((u.interpolate(0.25).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nodal_interpolant_is_exact_at_nodes() {
        let mesh = IntervalMesh::<f64>::unit(11).unwrap();
        let u = FieldCoefficients::interpolant(BasisSet::hat(mesh.clone()), |x| x * (1.0 - x)).unwrap();
        for x in mesh.nodes() {
            assert_eq!(u.interpolate(x).unwrap(), x * (1.0 - x));
        }
    }

    #[test]
    fn interpolate_rejects_points_outside() {
        let u = FieldCoefficients::zeros(BasisSet::hat(IntervalMesh::<f64>::unit(3).unwrap()));
        assert!(matches!(u.interpolate(1.5), Err(Error::Domain { .. })));
        assert!(matches!(u.interpolate(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn length_must_match_basis() {
        let basis = BasisSet::hat(IntervalMesh::<f64>::unit(4).unwrap());
        assert!(matches!(
            FieldCoefficients::new(basis, vec![0.0; 3]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn l2_norm_of_constant() {
        let mesh = IntervalMesh::new(0.0_f64, 2.0, 5).unwrap();
        let z = FieldCoefficients::constant(BasisSet::per_element(mesh), 3.0);
        assert!((z.l2_norm_squared().unwrap() - 18.0).abs() < 1e-13);
    }
}
