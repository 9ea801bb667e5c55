//! Minimal reverse-mode automatic differentiation.
//!
//! Numeric code that needs exact gradients is written once against the
//! [`Real`] trait. Evaluating it with plain scalars (`R = T`) gives values
//! only; evaluating it with tape variables (`R = Var<'_, T>`) records a
//! Wengert list on a [`Tape`] whose reverse sweep yields the gradient.
//!
//! The tape stores every node's incoming edges contiguously, so n-ary
//! primitives such as [`Real::dot`] cost one node instead of `2n - 1`.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::{self, Scalar};

/// Arithmetic needed by differentiable code paths.
///
/// Operations with a plain `T` on the right-hand side treat it as a
/// constant. Constants on the left are written `x.lift(c) - x` or by
/// reordering (`-x + c`).
pub trait Real<T: Scalar>:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<T, Output = Self>
    + Sub<T, Output = Self>
    + Mul<T, Output = Self>
    + Div<T, Output = Self>
{
    fn value(&self) -> T;
    /// A constant living in the same evaluation context as `self`.
    fn lift(&self, c: T) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn softplus(self) -> Self;
    fn sigmoid(self) -> Self;

    fn square(self) -> Self {
        self * self
    }

    fn zero_like(&self) -> Self {
        self.lift(T::zero())
    }

    /// Sum of a non-empty slice.
    fn sum(xs: &[Self]) -> Self;
    /// `Σ a_i b_i` for equal-length, non-empty slices.
    fn dot(a: &[Self], b: &[Self]) -> Self;
    /// `Σ a_i w_i` with constant weights.
    fn dot_const(a: &[Self], w: &[T]) -> Self;
    /// `Σ w_i x_i + b`.
    fn affine(w: &[Self], x: &[Self], b: Self) -> Self;

    /// Squared Euclidean norm of a non-empty slice.
    fn norm_squared(xs: &[Self]) -> Self {
        Self::dot(xs, xs)
    }
}

impl<T: Scalar> Real<T> for T {
    #[inline]
    fn value(&self) -> T {
        *self
    }
    #[inline]
    fn lift(&self, c: T) -> Self {
        c
    }
    #[inline]
    fn exp(self) -> Self {
        num_traits::Float::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        num_traits::Float::ln(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        num_traits::Float::tanh(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        num_traits::Float::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        num_traits::Float::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        num_traits::Float::cos(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        num_traits::Float::powi(self, n)
    }
    #[inline]
    fn softplus(self) -> Self {
        scalar::softplus(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        scalar::sigmoid(self)
    }
    fn sum(xs: &[Self]) -> Self {
        xs.iter().copied().sum()
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(&x, &y)| x * y).sum()
    }
    fn dot_const(a: &[Self], w: &[T]) -> Self {
        Self::dot(a, w)
    }
    fn affine(w: &[Self], x: &[Self], b: Self) -> Self {
        Self::dot(w, x) + b
    }
}

#[derive(Default)]
struct TapeData<T> {
    /// Edge range of node `i` is `starts[i]..starts[i + 1]`.
    starts: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<T>,
}

/// Recording context for reverse-mode differentiation.
pub struct Tape<T> {
    data: RefCell<TapeData<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            data: RefCell::new(TapeData {
                starts: vec![0],
                parents: Vec::new(),
                partials: Vec::new(),
            }),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.data.borrow().starts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A new independent variable.
    pub fn var(&self, value: T) -> Var<'_, T> {
        let index = self.push(std::iter::empty());
        Var { tape: self, index, value }
    }

    pub fn vars(&self, values: &[T]) -> Vec<Var<'_, T>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn push(&self, edges: impl IntoIterator<Item = (u32, T)>) -> u32 {
        let mut d = self.data.borrow_mut();
        let index = (d.starts.len() - 1) as u32;
        for (p, w) in edges {
            d.parents.push(p);
            d.partials.push(w);
        }
        let end = d.parents.len() as u32;
        d.starts.push(end);
        index
    }

    fn node(&self, value: T, edges: impl IntoIterator<Item = (u32, T)>) -> Var<'_, T> {
        let index = self.push(edges);
        Var { tape: self, index, value }
    }

    /// Reverse sweep seeded with `d output / d output = 1`.
    pub fn gradient(&self, output: Var<'_, T>) -> Gradient<T> {
        let d = self.data.borrow();
        let n = output.index as usize + 1;
        let mut adjoint = vec![T::zero(); n];
        adjoint[n - 1] = T::one();
        for i in (0..n).rev() {
            let g = adjoint[i];
            if g == T::zero() {
                continue;
            }
            let (s, e) = (d.starts[i] as usize, d.starts[i + 1] as usize);
            for k in s..e {
                adjoint[d.parents[k] as usize] += g * d.partials[k];
            }
        }
        Gradient { adjoint }
    }
}

/// Adjoints produced by [`Tape::gradient`].
pub struct Gradient<T> {
    adjoint: Vec<T>,
}

impl<T: Scalar> Gradient<T> {
    pub fn wrt(&self, v: &Var<'_, T>) -> T {
        self.adjoint
            .get(v.index as usize)
            .copied()
            .unwrap_or_else(T::zero)
    }

    pub fn wrt_all(&self, vs: &[Var<'_, T>]) -> Vec<T> {
        vs.iter().map(|v| self.wrt(v)).collect()
    }
}

/// A value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    index: u32,
    value: T,
}

impl<T: fmt::Debug> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({:?})", self.index, self.value)
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    #[inline]
    fn unary(self, value: T, partial: T) -> Self {
        self.tape.node(value, [(self.index, partial)])
    }

    #[inline]
    fn binary(self, other: Self, value: T, da: T, db: T) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "mixing tapes");
        self.tape
            .node(value, [(self.index, da), (other.index, db)])
    }
}

impl<'t, T: Scalar> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, T::one(), T::one())
    }
}

impl<'t, T: Scalar> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, T::one(), -T::one())
    }
}

impl<'t, T: Scalar> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t, T: Scalar> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = T::one() / rhs.value;
        let q = self.value * inv;
        self.binary(rhs, q, inv, -q * inv)
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.value, -T::one())
    }
}

impl<'t, T: Scalar> Add<T> for Var<'t, T> {
    type Output = Self;
    fn add(self, rhs: T) -> Self {
        self.unary(self.value + rhs, T::one())
    }
}

impl<'t, T: Scalar> Sub<T> for Var<'t, T> {
    type Output = Self;
    fn sub(self, rhs: T) -> Self {
        self.unary(self.value - rhs, T::one())
    }
}

impl<'t, T: Scalar> Mul<T> for Var<'t, T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t, T: Scalar> Div<T> for Var<'t, T> {
    type Output = Self;
    fn div(self, rhs: T) -> Self {
        let inv = T::one() / rhs;
        self.unary(self.value * inv, inv)
    }
}

impl<'t, T: Scalar> Real<T> for Var<'t, T> {
    #[inline]
    fn value(&self) -> T {
        self.value
    }

    fn lift(&self, c: T) -> Self {
        self.tape.var(c)
    }

    fn exp(self) -> Self {
        let e = num_traits::Float::exp(self.value);
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(num_traits::Float::ln(self.value), T::one() / self.value)
    }

    fn tanh(self) -> Self {
        let t = num_traits::Float::tanh(self.value);
        self.unary(t, T::one() - t * t)
    }

    fn sqrt(self) -> Self {
        let s = num_traits::Float::sqrt(self.value);
        self.unary(s, T::of(0.5) / s)
    }

    fn sin(self) -> Self {
        let (s, c) = num_traits::Float::sin_cos(self.value);
        self.unary(s, c)
    }

    fn cos(self) -> Self {
        let (s, c) = num_traits::Float::sin_cos(self.value);
        self.unary(c, -s)
    }

    fn powi(self, n: i32) -> Self {
        let d = if n == 0 {
            T::zero()
        } else {
            T::of(n as f64) * num_traits::Float::powi(self.value, n - 1)
        };
        self.unary(num_traits::Float::powi(self.value, n), d)
    }

    fn softplus(self) -> Self {
        self.unary(scalar::softplus(self.value), scalar::sigmoid(self.value))
    }

    fn sigmoid(self) -> Self {
        let s = scalar::sigmoid(self.value);
        self.unary(s, s * (T::one() - s))
    }

    fn sum(xs: &[Self]) -> Self {
        let tape = xs[0].tape;
        let value = xs.iter().map(|x| x.value).sum();
        tape.node(value, xs.iter().map(|x| (x.index, T::one())))
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let tape = a[0].tape;
        let value = a.iter().zip(b).map(|(x, y)| x.value * y.value).sum();
        tape.node(
            value,
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| [(x.index, y.value), (y.index, x.value)]),
        )
    }

    fn dot_const(a: &[Self], w: &[T]) -> Self {
        debug_assert_eq!(a.len(), w.len());
        let tape = a[0].tape;
        let value = a.iter().zip(w).map(|(x, &c)| x.value * c).sum();
        tape.node(value, a.iter().zip(w).map(|(x, &c)| (x.index, c)))
    }

    fn affine(w: &[Self], x: &[Self], b: Self) -> Self {
        debug_assert_eq!(w.len(), x.len());
        let value = w.iter().zip(x).map(|(p, q)| p.value * q.value).sum::<T>() + b.value;
        b.tape.node(
            value,
            w.iter()
                .zip(x)
                .flat_map(|(p, q)| [(p.index, q.value), (q.index, p.value)])
                .chain(std::iter::once((b.index, T::one()))),
        )
    }
}

/// Evaluates `f` on tape variables seeded with `params` and returns the
/// output value, its gradient with respect to `params`, and any auxiliary
/// data `f` produced alongside.
pub fn value_and_gradient<T, A, E, F>(params: &[T], f: F) -> Result<(T, Vec<T>, A), E>
where
    T: Scalar,
    F: for<'t> FnOnce(&'t Tape<T>, &[Var<'t, T>]) -> Result<(Var<'t, T>, A), E>,
{
    let tape = Tape::new();
    let vars = tape.vars(params);
    let (out, aux) = f(&tape, &vars)?;
    let grad = tape.gradient(out);
    Ok((out.value(), grad.wrt_all(&vars), aux))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let mut p = x.to_vec();
        p[i] += h;
        let fp = f(&p);
        p[i] -= 2.0 * h;
        let fm = f(&p);
        (fp - fm) / (2.0 * h)
    }

    fn composite<R: Real<f64>>(x: &[R]) -> R {
        let a = x[0] * x[1] + x[2].exp();
        let b = (x[0].square() + 1.0).ln() / (x[1].sigmoid() + 0.5);
        let c = R::dot(&x[..2], &x[1..]) + x[2].tanh().powi(3) + x[1].softplus().sqrt();
        let d = R::affine(&x[..2], &x[1..], x[0]) - x[2].sin() * x[0].cos();
        a * b - c / 3.0 + d + (-x[2]) + R::dot_const(x, &[0.5, -1.0, 2.0]) + R::sum(x)
    }

    #[test]
    fn tape_matches_finite_differences() {
        let x = [0.3, -1.2, 0.7];
        let (v, g, ()) = value_and_gradient(&x, |_, p| Ok::<_, ()>((composite(p), ()))).unwrap();
        assert!((v - composite(&x)).abs() < 1e-14);
        for (i, gi) in g.iter().enumerate() {
            let fd = central(composite::<f64>, &x, i);
            assert!((gi - fd).abs() < 1e-7 * fd.abs().max(1.0), "coord {i}: {gi} vs {fd}");
        }
    }

    #[test]
    fn repeated_operand_accumulates() {
        let tape = Tape::new();
        let x = tape.var(3.0_f64);
        let y = x * x + x;
        let g = tape.gradient(y);
        assert_eq!(g.wrt(&x), 7.0);
    }

    #[test]
    fn unused_variable_has_zero_gradient() {
        let tape = Tape::new();
        let x = tape.var(1.0_f64);
        let y = tape.var(2.0_f64);
        let z = x * 4.0;
        let g = tape.gradient(z);
        assert_eq!(g.wrt(&y), 0.0);
        assert_eq!(g.wrt(&x), 4.0);
        assert_eq!(tape.len(), 3);
    }

    #[test]
    fn works_in_single_precision() {
        let tape = Tape::<f32>::new();
        let x = tape.var(0.5);
        let y = x.tanh() * 2.0;
        let g = tape.gradient(y);
        let t = 0.5_f32.tanh();
        assert!((g.wrt(&x) - 2.0 * (1.0 - t * t)).abs() < 1e-6);
    }
}
