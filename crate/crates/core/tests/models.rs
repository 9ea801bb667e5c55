use varphys::models::{Activation, AmortizedGaussian, Checkpoint, ForwardModel, Mlp, MlpShape, PinnField, PoissonMap};
use varphys::pde::{BasisSet, IntervalMesh, SourceField};
use varphys::prob::{CovarianceKind, RandomStream};
use varphys::train::finite_difference;

#[test]
fn identity_layer_matches_hand_product() {
    let shape = MlpShape::new(vec![2, 2], vec![Activation::Identity]).unwrap();
    // weights row-major, then bias
    let net = Mlp::new(shape, vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
    let out = net.forward(&[1.0, -1.0]).unwrap();
    assert_eq!(out, vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 0.5]);
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let shape = MlpShape::dense(3, &[6, 5], 2, Activation::Tanh).unwrap();
    for seed in 0..5 {
        let net = Mlp::<f64>::init(shape.clone(), &RandomStream::new(seed, 0));
        let x = RandomStream::new(seed, 1).normals::<f64>(3);
        let g = net.gradients(&x).unwrap();
        for k in 0..2 {
            let fd = finite_difference(|p| Ok(shape.forward_with(p, &x)?[k]), net.params(), 1e-4).unwrap();
            for (a, n) in g.params[k].iter().zip(&fd) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                assert!(rel < 1e-4 || (a - n).abs() < 1e-10, "{a} vs {n}");
            }
        }
    }
}

#[test]
fn second_input_derivative_matches_finite_differences() {
    let shape = MlpShape::dense(1, &[8], 1, Activation::Tanh).unwrap();
    let net = Mlp::<f64>::init(shape, &RandomStream::new(3, 0));
    let (x, h) = (0.3, 1e-4);
    let f = |x: f64| net.forward(&[x]).unwrap()[0];
    let fd = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    assert!((net.second_derivative(x).unwrap()[0] - fd).abs() < 1e-5);
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let shape = MlpShape::dense(2, &[4], 3, Activation::Tanh).unwrap();
    let net = Mlp::<f64>::init(shape, &RandomStream::new(8, 0));
    let bytes = net.to_checkpoint().to_bytes().unwrap();
    let back = Mlp::<f64>::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back, net);
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn encoder_moments_are_continuous_in_input() {
    let enc = AmortizedGaussian::new(2, 3, &[8], CovarianceKind::Full).unwrap();
    let params: Vec<f64> = RandomStream::new(4, 0).normals(enc.num_params()).iter().map(|v| 0.3 * v).collect();
    let y = [0.2, -0.1, 0.5];
    let m0 = enc.moments_const_with(&params, &y).unwrap();
    let mut prev = f64::INFINITY;
    for h in [1e-2, 1e-3, 1e-4] {
        let yp = [y[0] + h, y[1], y[2]];
        let m1 = enc.moments_const_with(&params, &yp).unwrap();
        let d: f64 = m0.mean.iter().zip(&m1.mean).map(|(a, b)| (a - b).abs()).sum();
        // the change shrinks linearly with the perturbation
        assert!(d < prev && d < 50.0 * h, "{d} at {h}");
        prev = d;
    }
}

#[test]
fn pinn_field_vanishes_on_the_boundary() {
    let pinn = PinnField::<f64>::new(&[8, 8], 0.0, 2.0).unwrap();
    let p = pinn.init_params(&RandomStream::new(1, 0));
    assert!(pinn.value_with(&p, 0.0).unwrap().abs() < 1e-15);
    assert!(pinn.value_with(&p, 2.0).unwrap().abs() < 1e-15);
}

#[test]
fn poisson_map_reproduces_quadratic() {
    let mesh = IntervalMesh::unit(9).unwrap();
    let map = PoissonMap::new(mesh.clone(), BasisSet::piecewise_constant(mesh.clone(), 1).unwrap(), &SourceField::Constant(-2.0)).unwrap();
    let u: Vec<f64> = map.apply(&[], &[1.0]).unwrap();
    for (x, v) in mesh.nodes()[1..8].iter().zip(&u) {
        assert!((v - x * (1.0 - x)).abs() < 1e-12);
    }
    let logged = map.clone().with_log_params();
    let ul = logged.apply(&[], &[0.0]).unwrap();
    assert_eq!(u, ul);
}
