use varphys::models::IdentityMap;
use varphys::objectives::{BayesVi, DgpPoint, GaussianLikelihood, Objective};
use varphys::prob::{Gaussian, GaussianVariational, RandomStream};
use varphys::train::{check_gradient, train, GradCheckOptions, OptimizerState, Schedule, TrainConfig};
use varphys::Error;

fn conjugate() -> BayesVi<GaussianVariational, GaussianLikelihood<IdentityMap, f64>, Gaussian<f64>, f64> {
    let lik = GaussianLikelihood::isotropic(IdentityMap { dim: 1 }, 1.0).unwrap();
    BayesVi::new(GaussianVariational::diagonal(1).unwrap(), lik, Gaussian::standard(1).unwrap(), vec![2.0], 8).unwrap()
        .with_mc_kl()
}

fn run(seed: u64, steps: usize) -> varphys::train::TrainOutcome<f64> {
    let obj = conjugate();
    let mut opt = OptimizerState::adam(2);
    opt.lr = 0.05;
    let mut cfg = TrainConfig::new(steps, seed);
    cfg.eval_every = Some(50);
    train(&obj, Some(&obj), obj.init_params(&RandomStream::new(seed, 5)), &mut opt, &cfg).unwrap()
}

#[test]
fn training_is_reproducible() {
    let (a, b) = (run(3, 200), run(3, 200));
    assert_eq!(a.params, b.params);
    assert_eq!(a.trace.objectives(), b.trace.objectives());
    assert_ne!(run(4, 200).params, a.params);
    // evaluations every 50 steps plus the final one
    assert_eq!(a.evaluations.iter().map(|e| e.step).collect::<Vec<_>>(), vec![0, 50, 100, 150, 200]);
}

#[test]
fn trace_csv_layout() {
    let out = run(1, 5);
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,objective,grad_norm,wall_ms");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("0,"));
    assert_eq!(lines[5].split(',').count(), 4);
}

#[test]
fn moving_average_decreases_on_the_conjugate_model() {
    let obj = conjugate();
    let init = vec![-3.0, 1.0];
    let mut opt = OptimizerState::adam(2);
    opt.lr = 0.02;
    let out = train(&obj, None, init, &mut opt, &TrainConfig::new(400, 2)).unwrap();
    let v = out.trace.objectives();
    // block means of 50 steps decrease until the optimum's noise floor
    let blocks: Vec<f64> = v.chunks(50).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    assert!(blocks.windows(2).all(|w| w[1] < w[0] + 0.05), "{blocks:?}");
    assert!(blocks.last().unwrap() + 1.0 < blocks[0]);
}

#[test]
fn divergence_is_reported() {
    let obj = DgpPoint::new(IdentityMap { dim: 1 }, IdentityMap { dim: 1 }, vec![1.0], 0.0, 0.0).unwrap();
    let mut opt = OptimizerState::sgd(10.0);
    let err = train(&obj, None, vec![3.0], &mut opt, &TrainConfig::new(50, 0)).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
}

#[test]
fn cosine_schedule_reaches_its_floor() {
    let s = Schedule::Cosine { total: 100, min_lr: 1e-4 };
    assert_eq!(s.rate(0.1, 0), 0.1);
    assert!((s.rate(0.1f64, 50) - (1e-4 + 0.5 * (0.1 - 1e-4))).abs() < 1e-12);
    assert_eq!(s.rate(0.1, 100), 1e-4);
}

#[test]
fn gradient_check_flags_wrong_gradients() {
    let obj = conjugate();
    let p = obj.init_params(&RandomStream::new(0, 0));
    assert!(check_gradient(&obj, &p, &RandomStream::new(0, 1), &GradCheckOptions::default()).unwrap().passed);
    let strict = GradCheckOptions {
        step: 0.5,
        rel_tol: 1e-12,
        abs_floor: 0.0,
    };
    assert!(!check_gradient(&obj, &[p[0] + 0.3, p[1] - 0.2], &RandomStream::new(0, 1), &strict).unwrap().passed);
}
