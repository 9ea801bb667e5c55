use std::f64::consts::PI;

use varphys::pde::{
    assemble_strong_residual, assemble_weak_residual, gaussian_log_likelihood, observe, solve_poisson_fem, AnalyticField, BasisSet,
    FieldCoefficients, IntervalMesh, NoiseCovariance, ObservationModel, SourceField, TrialField,
};
use varphys::prob::RandomStream;
use varphys::Error;

fn unit(n: usize) -> IntervalMesh<f64> {
    IntervalMesh::unit(n).unwrap()
}

fn ones(mesh: &IntervalMesh<f64>) -> FieldCoefficients<f64> {
    FieldCoefficients::constant(BasisSet::per_element(mesh.clone()), 1.0)
}

/// L2 distance between a hat field and `exact`, by 5-point Gauss quadrature per element.
fn l2_error(u: &FieldCoefficients<f64>, exact: impl Fn(f64) -> f64) -> f64 {
    let gl = [
        (0.0, 128.0 / 225.0),
        (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let mesh = u.mesh();
    let h = mesh.h();
    let mut acc = 0.0;
    for e in 0..mesh.num_elements() {
        let mid = mesh.node(e) + 0.5 * h;
        for (t, w) in gl {
            let x = mid + 0.5 * h * t;
            acc += 0.5 * h * w * (u.interpolate(x).unwrap() - exact(x)).powi(2);
        }
    }
    acc.sqrt()
}

fn sine_source() -> SourceField<f64> {
    SourceField::function(|x: f64| -PI * PI * (PI * x).sin())
}

#[test]
fn single_hat_at_quarter_point() {
    let u = FieldCoefficients::new(BasisSet::hat(unit(3)), vec![0.0, 1.0, 0.0]).unwrap();
    assert!((u.interpolate(0.25).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn strong_residual_of_manufactured_sine_vanishes() {
    let mesh = unit(9);
    let u = AnalyticField::new(|x: f64| (PI * x).sin(), |x: f64| PI * (PI * x).cos(), |x: f64| -PI * PI * (PI * x).sin());
    let points: Vec<f64> = (0..23).map(|i| i as f64 / 22.0).collect();
    let r = assemble_strong_residual(TrialField::Smooth(&u), &ones(&mesh), &sine_source(), &points).unwrap();
    assert!(r.norm_inf() < 1e-6, "{}", r.norm_inf());
}

#[test]
fn strong_residual_of_square_is_two() {
    let mesh = unit(5);
    let u = AnalyticField::new(|x: f64| x * x, |x: f64| 2.0 * x, |_| 2.0);
    let r = assemble_strong_residual(TrialField::Smooth(&u), &ones(&mesh), &SourceField::Constant(0.0), &[0.5]).unwrap();
    assert!((r.values()[0] - 2.0).abs() < 1e-14);
}

#[test]
fn piecewise_linear_fields_have_no_strong_residual() {
    let mesh = unit(5);
    let u = FieldCoefficients::zeros(BasisSet::hat(mesh.clone()));
    let err = assemble_strong_residual(TrialField::Coefficients(&u), &ones(&mesh), &SourceField::Constant(0.0), &[0.5]);
    assert!(matches!(err, Err(Error::UnsupportedRepresentation(_))));
}

#[test]
fn weak_residual_is_at_least_second_order_consistent() {
    let norm = |n: usize| {
        let mesh = unit(n);
        let u = FieldCoefficients::interpolant(BasisSet::hat(mesh.clone()), |x| (PI * x).sin()).unwrap();
        assemble_weak_residual(&u, &ones(&mesh), &sine_source(), &BasisSet::hat(mesh.clone())).unwrap().norm_inf()
    };
    // In 1D the nodal interpolant superconverges, so the drop is far beyond 4x (about 32x).
    let ratio = norm(17) / norm(33);
    assert!(ratio >= 3.5, "ratio {ratio}");
}

#[test]
fn fem_reproduces_quadratic_nodally() {
    let mesh = unit(17);
    let u = solve_poisson_fem(&ones(&mesh), &SourceField::Constant(-2.0), &mesh).unwrap();
    for (x, v) in mesh.nodes().into_iter().zip(u.coeffs()) {
        assert!((v - x * (1.0 - x)).abs() < 1e-10);
    }
}

#[test]
fn fem_converges_at_second_order() {
    let err = |n: usize, f: &SourceField<f64>, exact: &dyn Fn(f64) -> f64| {
        let mesh = unit(n);
        l2_error(&solve_poisson_fem(&ones(&mesh), f, &mesh).unwrap(), exact)
    };
    let sine = |x: f64| (PI * x).sin();
    let quad = |x: f64| x * (1.0 - x);
    for (f, exact) in [(sine_source(), &sine as &dyn Fn(f64) -> f64), (SourceField::Constant(-2.0), &quad)] {
        let ratio = err(33, &f, exact) / err(65, &f, exact);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn fem_solution_zeroes_weak_residual() {
    let mesh = unit(21);
    let z = FieldCoefficients::interpolant(BasisSet::per_element(mesh.clone()), |x| 1.0 + x * x).unwrap();
    let f = SourceField::function(|x: f64| (3.0 * x).cos());
    let u = solve_poisson_fem(&z, &f, &mesh).unwrap();
    let r = assemble_weak_residual(&u, &z, &f, &BasisSet::hat(mesh.clone())).unwrap();
    assert!(r.norm_inf() < 1e-12);
}

#[test]
fn non_elliptic_coefficients_are_rejected() {
    let mesh = unit(9);
    let z = FieldCoefficients::new(BasisSet::piecewise_constant(mesh.clone(), 2).unwrap(), vec![1.0, -0.5]).unwrap();
    assert!(matches!(
        solve_poisson_fem(&z, &SourceField::Constant(1.0), &mesh),
        Err(Error::Ellipticity { .. })
    ));
}

#[test]
fn noiseless_sensor_readings() {
    let mesh = unit(5);
    let u = FieldCoefficients::interpolant(BasisSet::hat(mesh.clone()), |x| x * (1.0 - x)).unwrap();
    let obs = ObservationModel::isotropic(&mesh, vec![0.25, 0.5], 0.1).unwrap();
    let y = observe(&u, &obs, None).unwrap();
    assert!((y[0] - 0.1875).abs() < 1e-15 && (y[1] - 0.25).abs() < 1e-15);
}

#[test]
fn sensor_noise_has_requested_variance() {
    let mesh = unit(5);
    let u = FieldCoefficients::zeros(BasisSet::hat(mesh.clone()));
    let obs = ObservationModel::isotropic(&mesh, vec![0.5], 0.1).unwrap();
    let mut g = RandomStream::new(11, 0).generator();
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| observe(&u, &obs, Some(&[g.normal()])).unwrap()[0]).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // variance of the sample variance for Gaussians is 2σ⁴/(n−1)
    let se = (2.0 * 0.01f64.powi(2) / (n - 1) as f64).sqrt();
    assert!((var - 0.01).abs() < 3.0 * se, "{var}");
}

#[test]
fn gaussian_log_likelihood_by_hand() {
    let ln2pi = (2.0 * PI).ln();
    let id = NoiseCovariance::isotropic(1.0, 1).unwrap();
    assert!((gaussian_log_likelihood(&[0.3], &[0.3], &id).unwrap() + 0.5 * ln2pi).abs() < 1e-14);
    assert!((gaussian_log_likelihood(&[1.3], &[0.3], &id).unwrap() + 0.5 * ln2pi + 0.5).abs() < 1e-14);
}

#[test]
fn single_precision_quadratic() {
    let mesh = IntervalMesh::<f32>::unit(9).unwrap();
    let z = FieldCoefficients::constant(BasisSet::per_element(mesh.clone()), 1.0f32);
    let u = solve_poisson_fem(&z, &SourceField::Constant(-2.0f32), &mesh).unwrap();
    for (x, v) in mesh.nodes().into_iter().zip(u.coeffs()) {
        assert!((v - x * (1.0 - x)).abs() < 1e-5);
    }
}
