use crate::autodiff::Real;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, log_det_from_cholesky, lower_mul, solve_lower, solve_lower_var};
use crate::prob::rng::NoiseSource;
use crate::scalar::{softplus_inverse, Scalar};

/// A fixed Gaussian `N(mean, L Lᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian<T> {
    mean: Vec<T>,
    chol: Vec<T>,
    log_det: T,
    diagonal: bool,
}

impl<T: Scalar> Gaussian<T> {
    /// From a lower-triangular factor with positive diagonal.
    pub fn from_cholesky(mean: Vec<T>, chol: Vec<T>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Parameter {
                name: "dimension",
                reason: "Gaussian needs at least one dimension".into(),
            });
        }
        check_dim("Cholesky factor", d * d, chol.len())?;
        let mut diagonal = true;
        for i in 0..d {
            if !(chol[i * d + i] > T::zero()) {
                return Err(Error::Covariance(format!("factor diagonal {i} is not positive")));
            }
            for j in 0..d {
                let v = chol[i * d + j];
                if j > i && v != T::zero() {
                    return Err(Error::Covariance("factor is not lower-triangular".into()));
                }
                if j != i && v != T::zero() {
                    diagonal = false;
                }
            }
        }
        let log_det = log_det_from_cholesky(&chol, d);
        Ok(Self {
            mean,
            chol,
            log_det,
            diagonal,
        })
    }

    /// From a full covariance matrix (row-major).
    pub fn new(mean: Vec<T>, cov: &[T]) -> Result<Self> {
        let l = cholesky(cov, mean.len())?;
        Self::from_cholesky(mean, l)
    }

    pub fn diagonal(mean: Vec<T>, std: &[T]) -> Result<Self> {
        let d = mean.len();
        check_dim("standard deviations", d, std.len())?;
        let mut l = vec![T::zero(); d * d];
        for (i, &s) in std.iter().enumerate() {
            l[i * d + i] = s;
        }
        Self::from_cholesky(mean, l)
    }

    /// `N(0, I)`.
    pub fn standard(d: usize) -> Result<Self> {
        Self::diagonal(vec![T::zero(); d], &vec![T::one(); d])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn cholesky(&self) -> &[T] {
        &self.chol
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn covariance(&self) -> Vec<T> {
        let d = self.dim();
        let mut c = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = (0..=i.min(j)).map(|k| self.chol[i * d + k] * self.chol[j * d + k]).sum();
            }
        }
        c
    }

    /// `m + L ε`.
    pub fn transform(&self, eps: &[T]) -> Vec<T> {
        let d = self.dim();
        lower_mul(&self.chol, d, eps)
            .into_iter()
            .zip(&self.mean)
            .map(|(a, &m)| a + m)
            .collect()
    }

    pub fn sample(&self, noise: &mut NoiseSource) -> Vec<T> {
        let eps = noise.normals(self.dim());
        self.transform(&eps)
    }

    /// `log N(z; m, L Lᵀ)` for a differentiable point.
    pub fn log_density_with<R: Real<T>>(&self, z: &[R]) -> R {
        let d = self.dim();
        let diff: Vec<R> = z.iter().zip(&self.mean).map(|(&v, &m)| v - m).collect();
        let w = if self.diagonal {
            diff.iter().enumerate().map(|(i, &v)| v / self.chol[i * d + i]).collect()
        } else {
            solve_lower(&self.chol, d, &diff)
        };
        R::norm_squared(&w) * T::of(-0.5) - T::of(0.5) * (T::of_usize(d) * T::ln_two_pi() + self.log_det)
    }

    pub fn log_density(&self, z: &[T]) -> Result<T> {
        check_dim("Gaussian point", self.dim(), z.len())?;
        Ok(self.log_density_with(z))
    }
}

/// Covariance factor of a parameterized Gaussian.
#[derive(Debug, Clone)]
pub enum Factor<R> {
    /// Standard deviations.
    Diagonal(Vec<R>),
    /// Row-major lower-triangular `L` (entries above the diagonal are zero).
    Lower(Vec<R>),
}

impl<R> Factor<R> {
    pub fn dim(&self) -> usize {
        match self {
            Self::Diagonal(s) => s.len(),
            Self::Lower(l) => (l.len() as f64).sqrt().round() as usize,
        }
    }
}

impl<R: Copy> Factor<R> {
    pub fn diag(&self, i: usize) -> R {
        match self {
            Self::Diagonal(s) => s[i],
            Self::Lower(l) => l[i * self.dim() + i],
        }
    }
}

/// Differentiable moments `(m, L)` of a Gaussian.
#[derive(Debug, Clone)]
pub struct Moments<R> {
    pub mean: Vec<R>,
    pub factor: Factor<R>,
}

impl<R> Moments<R> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `m + L ε`.
    pub fn transform<T: Scalar>(&self, eps: &[T]) -> Vec<R>
    where
        R: Real<T>,
    {
        let d = self.dim();
        match &self.factor {
            Factor::Diagonal(s) => self
                .mean
                .iter()
                .zip(s)
                .zip(eps)
                .map(|((&m, &s), &e)| s * e + m)
                .collect(),
            Factor::Lower(l) => (0..d)
                .map(|i| R::dot_const(&l[i * d..i * d + i + 1], &eps[..=i]) + self.mean[i])
                .collect(),
        }
    }

    /// `Σ ln L_ii`.
    pub fn log_diag_sum<T: Scalar>(&self) -> R
    where
        R: Real<T>,
    {
        let logs: Vec<R> = (0..self.dim()).map(|i| self.factor.diag(i).ln()).collect();
        R::sum(&logs)
    }

    /// `log q(m + L ε)`, which depends on the moments only through `ln det L`.
    pub fn log_density_at_noise<T: Scalar>(&self, eps: &[T]) -> R
    where
        R: Real<T>,
    {
        let d = self.dim();
        let e2: T = eps.iter().map(|&e| e * e).sum();
        -self.log_diag_sum() - T::of(0.5) * (e2 + T::of_usize(d) * T::ln_two_pi())
    }

    /// `log q(z)` at an arbitrary point.
    pub fn log_density<T: Scalar>(&self, z: &[R]) -> R
    where
        R: Real<T>,
    {
        let d = self.dim();
        let diff: Vec<R> = z.iter().zip(&self.mean).map(|(&v, &m)| v - m).collect();
        let w: Vec<R> = match &self.factor {
            Factor::Diagonal(s) => diff.iter().zip(s).map(|(&v, &s)| v / s).collect(),
            Factor::Lower(l) => solve_lower_var(l, d, &diff),
        };
        R::norm_squared(&w) * T::of(-0.5) - self.log_diag_sum() - T::of(0.5) * T::of_usize(d) * T::ln_two_pi()
    }

    /// Closed-form `KL(N(m, LLᵀ) ‖ p)`.
    pub fn kl_to<T: Scalar>(&self, p: &Gaussian<T>) -> Result<R>
    where
        R: Real<T>,
    {
        let d = self.dim();
        check_dim("KL target", p.dim(), d)?;
        let pl = p.cholesky();
        let diff: Vec<R> = self.mean.iter().zip(p.mean()).map(|(&m, &mu)| m - mu).collect();
        let (maha, trace) = if p.is_diagonal() {
            let w: Vec<R> = diff.iter().enumerate().map(|(i, &v)| v / pl[i * d + i]).collect();
            let cols: Vec<R> = match &self.factor {
                Factor::Diagonal(s) => s.iter().enumerate().map(|(i, &s)| s / pl[i * d + i]).collect(),
                Factor::Lower(l) => (0..d)
                    .flat_map(|i| (0..=i).map(move |j| (i, j)))
                    .map(|(i, j)| l[i * d + j] / pl[i * d + i])
                    .collect(),
            };
            (R::norm_squared(&w), R::norm_squared(&cols))
        } else {
            let w = solve_lower(pl, d, &diff);
            let mut cols: Vec<R> = Vec::with_capacity(d * (d + 1) / 2);
            for j in 0..d {
                // column j of L is zero above row j
                let zero = self.mean[0].zero_like();
                let col: Vec<R> = (0..d)
                    .map(|i| match &self.factor {
                        Factor::Diagonal(s) if i == j => s[j],
                        Factor::Diagonal(_) => zero,
                        Factor::Lower(l) if i >= j => l[i * d + j],
                        Factor::Lower(_) => zero,
                    })
                    .collect();
                cols.extend(solve_lower(pl, d, &col).into_iter().skip(j));
            }
            (R::norm_squared(&w), R::norm_squared(&cols))
        };
        Ok((trace + maha - self.log_diag_sum() * T::of(2.0) + (p.log_det() - T::of_usize(d))) * T::of(0.5))
    }

    pub fn to_gaussian<T: Scalar>(&self) -> Result<Gaussian<T>>
    where
        R: Real<T>,
    {
        let d = self.dim();
        let mean = self.mean.iter().map(|m| m.value()).collect();
        let mut l = vec![T::zero(); d * d];
        match &self.factor {
            Factor::Diagonal(s) => s.iter().enumerate().for_each(|(i, s)| l[i * d + i] = s.value()),
            Factor::Lower(f) => f.iter().enumerate().for_each(|(k, v)| l[k] = v.value()),
        }
        Gaussian::from_cholesky(mean, l)
    }
}

/// Covariance parameterization of a [`GaussianVariational`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    /// One unconstrained `ln σ` per dimension.
    Diagonal,
    /// Lower-triangular factor, row-major, with softplus-positive diagonal.
    Full,
}

/// Reparameterizable Gaussian family `q_φ = N(m, L Lᵀ)`.
///
/// Parameter layout: `m` (d entries), then the covariance block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianVariational {
    dim: usize,
    kind: CovarianceKind,
}

impl GaussianVariational {
    pub fn new(dim: usize, kind: CovarianceKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter {
                name: "dimension",
                reason: "variational family needs at least one dimension".into(),
            });
        }
        Ok(Self { dim, kind })
    }

    pub fn diagonal(dim: usize) -> Result<Self> {
        Self::new(dim, CovarianceKind::Diagonal)
    }

    pub fn full(dim: usize) -> Result<Self> {
        Self::new(dim, CovarianceKind::Full)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn num_params(&self) -> usize {
        self.dim + self.factor_params()
    }

    fn factor_params(&self) -> usize {
        match self.kind {
            CovarianceKind::Diagonal => self.dim,
            CovarianceKind::Full => self.dim * (self.dim + 1) / 2,
        }
    }

    /// Moments from raw parameters.
    pub fn moments<T: Scalar, R: Real<T>>(&self, params: &[R]) -> Result<Moments<R>> {
        check_dim("Gaussian parameters", self.num_params(), params.len())?;
        let d = self.dim;
        let mean = params[..d].to_vec();
        let raw = &params[d..];
        Ok(Moments {
            mean,
            factor: moments_factor(self.kind, d, raw),
        })
    }

    /// Parameters whose moments equal `g`.
    pub fn params_for<T: Scalar>(&self, g: &Gaussian<T>) -> Result<Vec<T>> {
        check_dim("Gaussian dimension", self.dim, g.dim())?;
        let d = self.dim;
        let l = g.cholesky();
        let mut p = g.mean().to_vec();
        match self.kind {
            CovarianceKind::Diagonal => {
                if !g.is_diagonal() {
                    return Err(Error::Incompatible("diagonal family cannot hold a correlated Gaussian".into()));
                }
                p.extend((0..d).map(|i| l[i * d + i].ln()));
            }
            CovarianceKind::Full => {
                for i in 0..d {
                    for j in 0..=i {
                        let v = l[i * d + j];
                        p.push(if i == j { softplus_inverse(v) } else { v });
                    }
                }
            }
        }
        Ok(p)
    }

    /// Standard normal parameters.
    pub fn standard_params<T: Scalar>(&self) -> Vec<T> {
        let g = Gaussian::standard(self.dim).expect("positive dimension");
        self.params_for(&g).expect("standard normal fits any family")
    }

    pub fn distribution<T: Scalar>(&self, params: &[T]) -> Result<Gaussian<T>> {
        self.moments(params)?.to_gaussian()
    }
}

pub(crate) fn moments_factor<T: Scalar, R: Real<T>>(kind: CovarianceKind, d: usize, raw: &[R]) -> Factor<R> {
    match kind {
        CovarianceKind::Diagonal => Factor::Diagonal(raw[..d].iter().map(|&r| r.exp()).collect()),
        CovarianceKind::Full => {
            let zero = raw[0].zero_like();
            let mut l = vec![zero; d * d];
            let mut k = 0;
            for i in 0..d {
                for j in 0..=i {
                    l[i * d + j] = if i == j { raw[k].softplus() } else { raw[k] };
                    k += 1;
                }
            }
            Factor::Lower(l)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::rng::RandomStream;

    #[test]
    fn standard_normal_at_origin() {
        let g = Gaussian::<f64>::standard(1).unwrap();
        assert!((g.log_density(&[0.0]).unwrap() + 0.5 * f64::ln_two_pi()).abs() < 1e-15);
    }

    #[test]
    fn identity_transform_returns_noise() {
        let q = GaussianVariational::full(3).unwrap();
        let m = q.moments(&q.standard_params::<f64>()).unwrap();
        let eps = [0.3, -1.0, 2.5];
        let z = m.transform(&eps);
        for (a, b) in z.iter().zip(&eps) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn params_round_trip_through_moments() {
        let g = Gaussian::new(vec![1.0, -2.0], &[2.0, 0.3, 0.3, 0.5]).unwrap();
        let q = GaussianVariational::full(2).unwrap();
        let back: Gaussian<f64> = q.distribution(&q.params_for(&g).unwrap()).unwrap();
        for (a, b) in back.covariance().iter().zip(g.covariance()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_and_point_densities_agree() {
        let g = Gaussian::new(vec![0.5, 1.0], &[1.5, -0.4, -0.4, 0.7]).unwrap();
        let q = GaussianVariational::full(2).unwrap();
        let m = q.moments(&q.params_for(&g).unwrap()).unwrap();
        let eps = [0.7, -0.2];
        let z = m.transform(&eps);
        let a: f64 = m.log_density_at_noise(&eps);
        let b: f64 = m.log_density(&z);
        assert!((a - b).abs() < 1e-12);
        assert!((a - g.log_density(&z).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn closed_kl_known_values() {
        let p = Gaussian::diagonal(vec![0.0], &[1.0]).unwrap();
        let q = GaussianVariational::diagonal(1).unwrap();
        let m = q.moments(&[1.0, 0.0]).unwrap();
        assert!((m.kl_to::<f64>(&p).unwrap() - 0.5).abs() < 1e-15);
        let m = q.moments(&[0.0, 2.0_f64.ln()]).unwrap();
        assert!((m.kl_to(&p).unwrap() - (4.0 - 1.0 - 4.0_f64.ln()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn correlated_kl_paths_agree() {
        let p = Gaussian::new(vec![0.2, -0.1], &[1.3, 0.4, 0.4, 0.9]).unwrap();
        let q = GaussianVariational::diagonal(2).unwrap();
        let qd = q.moments(&[0.5, 0.1, -0.3, 0.2]).unwrap();
        let full = GaussianVariational::full(2).unwrap();
        let qf = full.moments(&full.params_for(&qd.to_gaussian::<f64>().unwrap()).unwrap()).unwrap();
        let a: f64 = qd.kl_to(&p).unwrap();
        let b: f64 = qf.kl_to(&p).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a > 0.0);
    }

    #[test]
    fn sample_statistics() {
        let g = Gaussian::diagonal(vec![3.0], &[2.0]).unwrap();
        let mut noise = RandomStream::new(11, 0).generator();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| g.sample(&mut noise)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 3.0).abs() < 3.0 * 2.0 / (n as f64).sqrt());
        assert!((var / 4.0 - 1.0).abs() < 0.05);
    }
}
