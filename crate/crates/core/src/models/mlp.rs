use std::fmt;
use std::str::FromStr;

use crate::autodiff::{value_and_gradient, Real};
use crate::error::{check_dim, Error, Result};
use crate::prob::rng::RandomStream;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Identity,
    Softplus,
    /// Not twice differentiable; second input derivatives are rejected.
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Self::Tanh => "tanh",
            Self::Identity => "identity",
            Self::Softplus => "softplus",
            Self::Relu => "relu",
        }
    }

    pub fn apply<T: Scalar, R: Real<T>>(self, z: R) -> R {
        match self {
            Self::Tanh => z.tanh(),
            Self::Identity => z,
            Self::Softplus => z.softplus(),
            Self::Relu => {
                if z.value() > T::zero() {
                    z
                } else {
                    z * T::zero()
                }
            }
        }
    }

    /// `(σ(z), σ'(z), σ''(z))`.
    fn jet<T: Scalar, R: Real<T>>(self, z: R) -> Result<(R, R, R)> {
        Ok(match self {
            Self::Tanh => {
                let t = z.tanh();
                let d = -t.square() + T::one();
                (t, d, t * d * T::of(-2.0))
            }
            Self::Identity => (z, z.lift(T::one()), z.lift(T::zero())),
            Self::Softplus => {
                let s = z.sigmoid();
                (z.softplus(), s, s * (-s + T::one()))
            }
            Self::Relu => {
                return Err(Error::UnsupportedRepresentation(
                    "relu has no second derivative".into(),
                ))
            }
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Self::Tanh),
            "identity" => Ok(Self::Identity),
            "softplus" => Ok(Self::Softplus),
            "relu" => Ok(Self::Relu),
            other => Err(Error::Parameter {
                name: "activation",
                reason: format!("unknown activation `{other}`"),
            }),
        }
    }
}

/// Architecture of a fully connected network; parameters live outside.
///
/// Layer `i` maps `widths[i] → widths[i+1]` with weights stored row-major
/// (`out × in`) followed by the bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpShape {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpShape {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Parameter {
                name: "widths",
                reason: "need input and output widths".into(),
            });
        }
        check_dim("activations", widths.len() - 1, activations.len())?;
        if widths[1..].contains(&0) {
            return Err(Error::Parameter {
                name: "widths",
                reason: "hidden and output widths must be positive".into(),
            });
        }
        Ok(Self { widths, activations })
    }

    /// `d_in → hidden… → d_out` with one hidden activation and identity output.
    pub fn dense(d_in: usize, hidden: &[usize], d_out: usize, act: Activation) -> Result<Self> {
        let mut widths = vec![d_in];
        widths.extend_from_slice(hidden);
        widths.push(d_out);
        let mut acts = vec![act; hidden.len()];
        acts.push(Activation::Identity);
        Self::new(widths, acts)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize, Activation)> + '_ {
        let mut off = 0;
        self.widths.windows(2).zip(&self.activations).map(move |(w, &a)| {
            let start = off;
            off += w[0] * w[1] + w[1];
            (start, w[0], w[1], a)
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<T: Scalar>(&self, rng: &RandomStream) -> Vec<T> {
        let mut g = rng.generator();
        let mut p = Vec::with_capacity(self.num_params());
        for (_, fi, fo, _) in self.layer_offsets() {
            let lim = T::of((6.0 / (fi + fo) as f64).sqrt());
            for _ in 0..fi * fo {
                p.push(g.uniform_in(-lim, lim));
            }
            p.extend(std::iter::repeat_n(T::zero(), fo));
        }
        p
    }

    /// As [`MlpShape::init`] but with the final layer zeroed (output identically 0).
    pub fn init_zero_output<T: Scalar>(&self, rng: &RandomStream) -> Vec<T> {
        let mut p = self.init(rng);
        let (start, _, _, _) = self.layer_offsets().last().expect("at least one layer");
        p[start..].iter_mut().for_each(|v| *v = T::zero());
        p
    }

    fn check_finite<T: Scalar, R: Real<T>>(layer: usize, xs: &[R]) -> Result<()> {
        if xs.iter().all(|x| x.value().is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric {
                context: "network forward",
                layer: Some(layer),
            })
        }
    }

    fn layer<T: Scalar, R: Real<T>>(params: &[R], (start, fi, fo): (usize, usize, usize), x: &[R]) -> Vec<R> {
        let bias = &params[start + fi * fo..start + fi * fo + fo];
        if fi == 0 {
            return bias.to_vec();
        }
        (0..fo)
            .map(|j| R::affine(&params[start + j * fi..start + (j + 1) * fi], x, bias[j]))
            .collect()
    }

    fn layer_const<T: Scalar, R: Real<T>>(params: &[R], (start, fi, fo): (usize, usize, usize), x: &[T]) -> Vec<R> {
        let bias = &params[start + fi * fo..start + fi * fo + fo];
        if fi == 0 {
            return bias.to_vec();
        }
        (0..fo)
            .map(|j| R::dot_const(&params[start + j * fi..start + (j + 1) * fi], x) + bias[j])
            .collect()
    }

    fn check_shapes(&self, params: usize, input: usize) -> Result<()> {
        check_dim("network parameters", self.num_params(), params)?;
        check_dim("network input", self.input_dim(), input)
    }

    /// Forward pass on a differentiable input.
    pub fn forward_with<T: Scalar, R: Real<T>>(&self, params: &[R], x: &[R]) -> Result<Vec<R>> {
        self.check_shapes(params.len(), x.len())?;
        let mut h = x.to_vec();
        for (l, (start, fi, fo, act)) in self.layer_offsets().enumerate() {
            h = Self::layer(params, (start, fi, fo), &h)
                .into_iter()
                .map(|z| act.apply(z))
                .collect();
            Self::check_finite(l, &h)?;
        }
        Ok(h)
    }

    /// Forward pass on a constant input.
    pub fn forward_const_with<T: Scalar, R: Real<T>>(&self, params: &[R], x: &[T]) -> Result<Vec<R>> {
        self.check_shapes(params.len(), x.len())?;
        let mut layers = self.layer_offsets().enumerate();
        let Some((l, (start, fi, fo, act))) = layers.next() else {
            unreachable!("shape has at least one layer")
        };
        let mut h: Vec<R> = Self::layer_const(params, (start, fi, fo), x)
            .into_iter()
            .map(|z| act.apply(z))
            .collect();
        Self::check_finite(l, &h)?;
        for (l, (start, fi, fo, act)) in layers {
            h = Self::layer(params, (start, fi, fo), &h)
                .into_iter()
                .map(|z| act.apply(z))
                .collect();
            Self::check_finite(l, &h)?;
        }
        Ok(h)
    }

    /// Forward pass with constant (frozen) parameters and a differentiable input.
    pub fn forward_frozen_with<T: Scalar, R: Real<T>>(&self, params: &[T], x: &[R]) -> Result<Vec<R>> {
        self.check_shapes(params.len(), x.len())?;
        let mut h = x.to_vec();
        for (l, (start, fi, fo, act)) in self.layer_offsets().enumerate() {
            let bias = &params[start + fi * fo..start + fi * fo + fo];
            h = (0..fo)
                .map(|j| act.apply(R::dot_const(&h, &params[start + j * fi..start + (j + 1) * fi]) + bias[j]))
                .collect();
            Self::check_finite(l, &h)?;
        }
        Ok(h)
    }

    /// `(f, ∂f/∂x, ∂²f/∂x²)` per output for a scalar-input network, by forward jets.
    pub fn jet_with<T: Scalar, R: Real<T>>(&self, params: &[R], x: T) -> Result<Vec<(R, R, R)>> {
        self.check_shapes(params.len(), 1)?;
        let mut v: Vec<R> = Vec::new();
        let mut d1: Vec<R> = Vec::new();
        let mut d2: Vec<R> = Vec::new();
        for (l, (start, fi, fo, act)) in self.layer_offsets().enumerate() {
            let w = |j: usize| &params[start + j * fi..start + (j + 1) * fi];
            let bias = &params[start + fi * fo..start + fi * fo + fo];
            let mut nv = Vec::with_capacity(fo);
            let mut n1 = Vec::with_capacity(fo);
            let mut n2 = Vec::with_capacity(fo);
            for (j, &b) in bias.iter().enumerate() {
                let (z, z1, z2) = if l == 0 {
                    let wj = w(j)[0];
                    (wj * x + b, wj, wj * T::zero())
                } else {
                    (R::affine(w(j), &v, b), R::dot(w(j), &d1), R::dot(w(j), &d2))
                };
                let (s, s1, s2) = act.jet(z)?;
                nv.push(s);
                n1.push(s1 * z1);
                n2.push(s2 * z1.square() + s1 * z2);
            }
            Self::check_finite(l, &nv)?;
            v = nv;
            d1 = n1;
            d2 = n2;
        }
        Ok(v.into_iter().zip(d1).zip(d2).map(|((a, b), c)| (a, b, c)).collect())
    }
}

/// A network together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    shape: MlpShape,
    params: Vec<T>,
}

/// Exact derivatives of a network output at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients<T> {
    /// `∂out_k/∂θ`, one row per output.
    pub params: Vec<Vec<T>>,
    /// `∂out_k/∂x`, one row per output.
    pub input: Vec<Vec<T>>,
    /// `∂²out_k/∂x²` for scalar-input networks.
    pub input_second: Option<Vec<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(shape: MlpShape, params: Vec<T>) -> Result<Self> {
        check_dim("network parameters", shape.num_params(), params.len())?;
        Ok(Self { shape, params })
    }

    pub fn init(shape: MlpShape, rng: &RandomStream) -> Self {
        let params = shape.init(rng);
        Self { shape, params }
    }

    pub fn zeros(shape: MlpShape) -> Self {
        let params = vec![T::zero(); shape.num_params()];
        Self { shape, params }
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<T> {
        self.params
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.shape.forward_with(&self.params, x)
    }

    /// Parameter and input Jacobians by reverse sweeps; second input derivative
    /// when the input is scalar and every activation is smooth.
    pub fn gradients(&self, x: &[T]) -> Result<MlpGradients<T>> {
        let n_out = self.shape.output_dim();
        let np = self.params.len();
        let mut params = Vec::with_capacity(n_out);
        let mut input = Vec::with_capacity(n_out);
        let mut joint = self.params.clone();
        joint.extend_from_slice(x);
        for k in 0..n_out {
            let (_, g, ()) = value_and_gradient(&joint, |_, v| {
                let out = self.shape.forward_with(&v[..np], &v[np..])?;
                Ok::<_, Error>((out[k], ()))
            })?;
            params.push(g[..np].to_vec());
            input.push(g[np..].to_vec());
        }
        let smooth = !self.shape.activations.contains(&Activation::Relu);
        let input_second = if x.len() == 1 && smooth {
            Some(self.shape.jet_with(&self.params, x[0])?.into_iter().map(|j| j.2).collect())
        } else {
            None
        };
        Ok(MlpGradients {
            params,
            input,
            input_second,
        })
    }

    /// Second input derivative of a scalar-input network.
    pub fn second_derivative(&self, x: T) -> Result<Vec<T>> {
        Ok(self.shape.jet_with(&self.params, x)?.into_iter().map(|j| j.2).collect())
    }
}
