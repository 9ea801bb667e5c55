use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform partition of `[a, b]` into `nodes - 1` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMesh<T> {
    a: T,
    b: T,
    nodes: usize,
}

impl<T: Scalar> IntervalMesh<T> {
    pub fn new(a: T, b: T, nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::Parameter {
                name: "mesh_size",
                reason: format!("need at least 2 nodes, got {nodes}"),
            });
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::Parameter {
                name: "domain",
                reason: format!("need finite a < b, got [{a}, {b}]"),
            });
        }
        Ok(Self { a, b, nodes })
    }

    /// `[0, 1]` with `nodes` nodes.
    pub fn unit(nodes: usize) -> Result<Self> {
        Self::new(T::zero(), T::one(), nodes)
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn num_elements(&self) -> usize {
        self.nodes - 1
    }

    pub fn num_interior(&self) -> usize {
        self.nodes - 2
    }

    /// Element width.
    pub fn h(&self) -> T {
        (self.b - self.a) / T::of_usize(self.nodes - 1)
    }

    pub fn node(&self, i: usize) -> T {
        if i + 1 == self.nodes {
            self.b
        } else {
            self.a + self.h() * T::of_usize(i)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.nodes).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.a && x <= self.b
    }

    pub(crate) fn check_contains(&self, x: T) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                x: x.to_f64_lossy(),
                a: self.a.to_f64_lossy(),
                b: self.b.to_f64_lossy(),
            })
        }
    }

    /// Index of the element containing `x`; the right endpoint belongs to the last element.
    pub fn element_of(&self, x: T) -> usize {
        let t = ((x - self.a) / self.h()).floor();
        let e = t.to_usize().unwrap_or(0);
        e.min(self.nodes - 2)
    }

    /// Two-point Gauss–Legendre abscissae on element `e`; each carries weight `h / 2`.
    pub fn gauss_points(&self, e: usize) -> [T; 2] {
        let h = self.h();
        let mid = self.node(e) + h * T::of(0.5);
        let off = h * T::of(0.5) / T::of(3.0).sqrt();
        [mid - off, mid + off]
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.a == other.a && self.b == other.b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_uniform_and_hit_endpoints() {
        let m = IntervalMesh::new(-1.0_f64, 2.0, 7).unwrap();
        let xs = m.nodes();
        assert_eq!(xs[0], -1.0);
        assert_eq!(xs[6], 2.0);
        assert!((m.h() - 0.5).abs() < 1e-15);
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_degenerate_meshes() {
        assert!(IntervalMesh::<f64>::unit(1).is_err());
        assert!(IntervalMesh::new(1.0_f64, 1.0, 5).is_err());
    }

    #[test]
    fn element_lookup_clamps_right_endpoint() {
        let m = IntervalMesh::<f64>::unit(5).unwrap();
        assert_eq!(m.element_of(0.0), 0);
        assert_eq!(m.element_of(0.3), 1);
        assert_eq!(m.element_of(1.0), 3);
    }
}
