use crate::autodiff::Real;
use crate::error::Result;
use crate::models::mlp::{Activation, MlpShape};
use crate::pde::field::SmoothField;
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

/// Neural trial field `u(x) = (x − a)(b − x) N_θ(x)`, zero at both ends by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnField<T> {
    shape: MlpShape,
    a: T,
    b: T,
}

impl<T: Scalar> PinnField<T> {
    pub fn new(hidden: &[usize], a: T, b: T) -> Result<Self> {
        Ok(Self {
            shape: MlpShape::dense(1, hidden, 1, Activation::Tanh)?,
            a,
            b,
        })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn num_params(&self) -> usize {
        self.shape.num_params()
    }

    pub fn init_params(&self, rng: &RandomStream) -> Vec<T> {
        self.shape.init(rng)
    }

    /// `(u, u', u'')` at `x`.
    pub fn jet_with<R: Real<T>>(&self, params: &[R], x: T) -> Result<(R, R, R)> {
        let (n, n1, n2) = self.shape.jet_with(params, x)?[0];
        let m = (x - self.a) * (self.b - x);
        let m1 = self.a + self.b - x - x;
        let m2 = T::of(-2.0);
        Ok((n * m, n * m1 + n1 * m, n * m2 + n1 * (m1 + m1) + n2 * m))
    }

    pub fn value_with<R: Real<T>>(&self, params: &[R], x: T) -> Result<R> {
        let n = self.shape.forward_const_with(params, &[x])?[0];
        Ok(n * ((x - self.a) * (self.b - x)))
    }

    /// Binds parameters for use as a strong-form trial field.
    pub fn bind<'a>(&'a self, params: &'a [T]) -> PinnTrial<'a, T> {
        PinnTrial { field: self, params }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PinnTrial<'a, T> {
    field: &'a PinnField<T>,
    params: &'a [T],
}

impl<T: Scalar> SmoothField<T> for PinnTrial<'_, T> {
    fn jet(&self, x: T) -> Result<(T, T, T)> {
        self.field.jet_with(self.params, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_at_boundary() {
        let f = PinnField::<f64>::new(&[8, 8], 0.0, 1.0).unwrap();
        let p = f.init_params(&RandomStream::new(2, 0));
        assert_eq!(f.value_with(&p, 0.0).unwrap(), 0.0);
        assert_eq!(f.value_with(&p, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn jet_matches_finite_differences() {
        let f = PinnField::<f64>::new(&[6, 6], 0.0, 2.0).unwrap();
        let p = f.init_params(&RandomStream::new(4, 0));
        let x = 0.7;
        let h = 1e-4;
        let (u, d1, d2) = f.jet_with(&p, x).unwrap();
        let up = f.value_with(&p, x + h).unwrap();
        let um = f.value_with(&p, x - h).unwrap();
        assert!((u - f.value_with(&p, x).unwrap()).abs() < 1e-14);
        assert!((d1 - (up - um) / (2.0 * h)).abs() < 1e-7);
        assert!((d2 - (up - 2.0 * u + um) / (h * h)).abs() < 1e-5);
    }
}
