use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::pde::mesh::IntervalMesh;
use crate::scalar::Scalar;

/// How a coefficient vector is turned into a function on the mesh.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind<T> {
    /// Piecewise-linear hat functions, one per node.
    Hat,
    /// Indicator functions of `cells` equal-width cells covering the domain.
    PiecewiseConstant { cells: usize },
    /// Dirac test functions at the given points.
    Collocation { points: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet<T> {
    kind: BasisKind<T>,
    mesh: IntervalMesh<T>,
}

/// At most two `(index, weight)` pairs of basis functions that are non-zero at a point.
pub type BasisWeights<T> = ([(usize, T); 2], usize);

impl<T: Scalar> BasisSet<T> {
    pub fn hat(mesh: IntervalMesh<T>) -> Self {
        Self {
            kind: BasisKind::Hat,
            mesh,
        }
    }

    pub fn piecewise_constant(mesh: IntervalMesh<T>, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Parameter {
                name: "cells",
                reason: "piecewise-constant basis needs at least one cell".into(),
            });
        }
        Ok(Self {
            kind: BasisKind::PiecewiseConstant { cells },
            mesh,
        })
    }

    /// One indicator per mesh element.
    pub fn per_element(mesh: IntervalMesh<T>) -> Self {
        let cells = mesh.num_elements();
        Self {
            kind: BasisKind::PiecewiseConstant { cells },
            mesh,
        }
    }

    pub fn collocation(mesh: IntervalMesh<T>, points: Vec<T>) -> Result<Self> {
        for &x in &points {
            mesh.check_contains(x)?;
        }
        Ok(Self {
            kind: BasisKind::Collocation { points },
            mesh,
        })
    }

    pub fn kind(&self) -> &BasisKind<T> {
        &self.kind
    }

    pub fn mesh(&self) -> &IntervalMesh<T> {
        &self.mesh
    }

    pub fn size(&self) -> usize {
        match &self.kind {
            BasisKind::Hat => self.mesh.num_nodes(),
            BasisKind::PiecewiseConstant { cells } => *cells,
            BasisKind::Collocation { points } => points.len(),
        }
    }

    pub fn is_hat(&self) -> bool {
        matches!(self.kind, BasisKind::Hat)
    }

    fn cell_of(&self, cells: usize, x: T) -> usize {
        let t = ((x - self.mesh.a()) / (self.mesh.b() - self.mesh.a()) * T::of_usize(cells)).floor();
        t.to_usize().unwrap_or(0).min(cells - 1)
    }

    /// Common cell width of a piecewise-constant basis.
    pub fn cell_width(&self) -> Option<T> {
        match self.kind {
            BasisKind::PiecewiseConstant { cells } => {
                Some((self.mesh.b() - self.mesh.a()) / T::of_usize(cells))
            }
            _ => None,
        }
    }

    /// Non-zero basis values at `x`.
    pub fn weights(&self, x: T) -> Result<BasisWeights<T>> {
        self.mesh.check_contains(x)?;
        match &self.kind {
            BasisKind::Hat => {
                // snap to a node so nodal interpolation is exact
                let r = (x - self.mesh.a()) / self.mesh.h();
                let k = r.round();
                if (r - k).abs() <= T::of(1e-12) * k.max(T::one()) {
                    let k = k.to_usize().unwrap_or(0);
                    let other = if k + 1 < self.mesh.num_nodes() { k + 1 } else { k - 1 };
                    return Ok(([(k, T::one()), (other, T::zero())], 2));
                }
                let e = self.mesh.element_of(x);
                let t = (x - self.mesh.node(e)) / self.mesh.h();
                Ok(([(e, T::one() - t), (e + 1, t)], 2))
            }
            BasisKind::PiecewiseConstant { cells } => {
                Ok(([(self.cell_of(*cells, x), T::one()), (0, T::zero())], 1))
            }
            BasisKind::Collocation { .. } => Err(Error::UnsupportedRepresentation(
                "collocation (Dirac) functions have no pointwise interpolant".into(),
            )),
        }
    }

    /// Non-zero basis derivatives at `x` (zero inside piecewise-constant cells).
    pub fn derivative_weights(&self, x: T) -> Result<BasisWeights<T>> {
        self.mesh.check_contains(x)?;
        match &self.kind {
            BasisKind::Hat => {
                let e = self.mesh.element_of(x);
                let s = T::one() / self.mesh.h();
                Ok(([(e, -s), (e + 1, s)], 2))
            }
            BasisKind::PiecewiseConstant { .. } => Ok(([(0, T::zero()), (0, T::zero())], 0)),
            BasisKind::Collocation { .. } => Err(Error::UnsupportedRepresentation(
                "collocation (Dirac) functions are not differentiable".into(),
            )),
        }
    }

    /// Value of basis function `i` at `x`.
    pub fn eval_basis(&self, i: usize, x: T) -> Result<T> {
        let (w, n) = self.weights(x)?;
        Ok(w[..n]
            .iter()
            .filter(|(k, _)| *k == i)
            .map(|(_, v)| *v)
            .sum())
    }

    /// `Σ_k c_k φ_k(x)` for differentiable coefficients.
    pub fn eval_with<R: Real<T>>(&self, coeffs: &[R], x: T) -> Result<R> {
        let (w, n) = self.weights(x)?;
        Ok(combine(coeffs, &w[..n]))
    }

    /// `Σ_k c_k φ_k'(x)`; `None` when the derivative vanishes identically.
    pub fn derivative_with<R: Real<T>>(&self, coeffs: &[R], x: T) -> Result<Option<R>> {
        let (w, n) = self.derivative_weights(x)?;
        Ok((n > 0).then(|| combine(coeffs, &w[..n])))
    }
}

pub(crate) fn combine<T: Scalar, R: Real<T>>(coeffs: &[R], w: &[(usize, T)]) -> R {
    match w {
        [(k, v)] if *v == T::one() => coeffs[*k],
        [(k, v)] => coeffs[*k] * *v,
        _ => {
            let mut acc = coeffs[w[0].0] * w[0].1;
            for &(k, v) in &w[1..] {
                if v != T::zero() {
                    acc = acc + coeffs[k] * v;
                }
            }
            acc
        }
    }
}
