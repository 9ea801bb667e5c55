use nalgebra::{DMatrix, DVector};

use varphys::inversion::{
    lbfgs, physics_regularized_invert, tikhonov_invert, ForwardBinding, InverseProblemSpec, LbfgsOptions, PhysicsInverseSpec,
};
use varphys::models::{LinearMap, PinnField, PoissonMap};
use varphys::objectives::ResidualModel;
use varphys::pde::{BasisSet, FieldCoefficients, IntervalMesh, ObservationModel, SourceField};
use varphys::prob::RandomStream;

fn tight() -> LbfgsOptions<f64> {
    LbfgsOptions {
        max_iters: 2000,
        gtol: 1e-10,
        memory: 10,
    }
}

#[test]
fn tikhonov_matches_normal_equations() {
    for k in 0..20 {
        let s = RandomStream::new(40, k);
        let (m, n) = (6, 4);
        let a: Vec<f64> = s.substream(0).normals(m * n);
        let y: Vec<f64> = s.substream(1).normals(m);
        let beta = 0.1 + s.substream(2).uniforms::<f64>(1)[0];
        let spec = InverseProblemSpec {
            y: y.clone(),
            binding: ForwardBinding::Linear(LinearMap::new(a.clone(), m, n).unwrap()),
            beta,
        };
        let r = tikhonov_invert(&spec, &[0.0; 4], &tight()).unwrap();
        let am = DMatrix::from_row_slice(m, n, &a);
        let lhs = am.transpose() * &am + DMatrix::identity(n, n) * beta;
        let exact = lhs.lu().solve(&(am.transpose() * DVector::from_vec(y))).unwrap();
        for (z, e) in r.z.iter().zip(exact.iter()) {
            assert!((z - e).abs() < 1e-6, "{z} vs {e}");
        }
    }
}

#[test]
fn larger_beta_shrinks_the_estimate() {
    let mesh = IntervalMesh::unit(17).unwrap();
    let basis = BasisSet::piecewise_constant(mesh.clone(), 2).unwrap();
    let obs = ObservationModel::isotropic(&mesh, vec![0.2, 0.4, 0.6, 0.8], 0.01).unwrap();
    let map = PoissonMap::new(mesh, basis, &SourceField::Constant(-2.0)).unwrap().with_observation(obs);
    let y = varphys::models::ForwardModel::apply(&map, &[], &[1.5, 0.6]).unwrap();
    let mut last = f64::INFINITY;
    for beta in [1e-4, 1e-3, 1e-2, 1e-1] {
        let spec = InverseProblemSpec {
            y: y.clone(),
            binding: ForwardBinding::Pde(map.clone()),
            beta,
        };
        let r = tikhonov_invert(&spec, &[1.0, 1.0], &tight()).unwrap();
        let norm = r.z.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < last);
        last = norm;
        // objective values never increase along accepted steps
        assert!(r.values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert_eq!(r.trace.len(), r.values.len());
    }
}

fn piecewise_data(zt: &[f64], nodes: usize, sensors: &[f64]) -> Vec<f64> {
    let mesh = IntervalMesh::unit(nodes).unwrap();
    let m = ResidualModel::new(mesh.clone(), BasisSet::piecewise_constant(mesh.clone(), 2).unwrap(), SourceField::Constant(-2.0)).unwrap();
    let u = FieldCoefficients::from_interior(mesh, &m.solve(zt).unwrap()).unwrap();
    sensors.iter().map(|&x| u.interpolate(x).unwrap()).collect()
}

#[test]
fn physics_inversion_recovers_coefficients_with_fem_trial() {
    let zt = [1.5, 0.6];
    let mesh = IntervalMesh::unit(17).unwrap();
    let model = ResidualModel::new(mesh.clone(), BasisSet::piecewise_constant(mesh.clone(), 2).unwrap(), SourceField::Constant(-2.0))
        .unwrap()
        .with_log_params();
    let sensors = mesh.nodes()[1..16].to_vec();
    let y = piecewise_data(&zt, 17, &sensors);
    let obs = ObservationModel::isotropic(&mesh, sensors, 1.0).unwrap();
    for alternating in [false, true] {
        let spec = PhysicsInverseSpec {
            model: model.clone(),
            obs: obs.clone(),
            y: y.clone(),
            beta: 1.0,
            alternating,
        };
        let r = physics_regularized_invert(&spec, &[0.0; 15], &[1.0, 1.0], &tight()).unwrap();
        for (z, t) in r.z.iter().zip(&zt) {
            assert!((z / t - 1.0).abs() < 0.02, "alternating={alternating}: {:?}", r.z);
        }
    }
}

#[test]
fn physics_inversion_with_pinn_trial() {
    let zt = [1.5, 0.6];
    let mesh = IntervalMesh::unit(17).unwrap();
    let pinn = PinnField::new(&[16, 16], 0.0, 1.0).unwrap();
    // keep collocation points off the coefficient jump, where the strong form is singular
    let points: Vec<f64> = (0..40).map(|i| (i as f64 + 0.5) / 40.0).filter(|x| (x - 0.5f64).abs() > 0.1).collect();
    let model = ResidualModel::new(mesh.clone(), BasisSet::piecewise_constant(mesh.clone(), 2).unwrap(), SourceField::Constant(-2.0))
        .unwrap()
        .with_log_params()
        .with_collocation(pinn.clone(), points)
        .unwrap();
    let sensors: Vec<f64> = (1..64).map(|i| i as f64 / 64.0).collect();
    let y = piecewise_data(&zt, 65, &sensors);
    let spec = PhysicsInverseSpec {
        model,
        obs: ObservationModel::isotropic(&mesh, sensors, 1.0).unwrap(),
        y,
        beta: 1e-3,
        alternating: false,
    };
    let u0 = pinn.init_params(&RandomStream::new(1, 1));
    let opts = LbfgsOptions {
        max_iters: 5000,
        gtol: 1e-10,
        memory: 20,
    };
    let r = physics_regularized_invert(&spec, &u0, &[1.0, 1.0], &opts).unwrap();
    for (z, t) in r.z.iter().zip(&zt) {
        assert!((z / t - 1.0).abs() < 0.05, "{:?}", r.z);
    }
}

#[test]
fn lbfgs_minimizes_a_quadratic_bowl() {
    let r = lbfgs(
        |x: &[f64]| Ok(((x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2), vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 2.0)])),
        vec![0.0, 0.0],
        &LbfgsOptions::default(),
    )
    .unwrap();
    assert!(r.converged && (r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] + 2.0).abs() < 1e-6);
    assert_eq!(r.trace.records[0].step, 0);
}
