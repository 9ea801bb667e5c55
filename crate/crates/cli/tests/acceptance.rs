//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde_json::Value;

use varphys::inversion::{physics_regularized_invert, tikhonov_invert, ForwardBinding, InverseProblemSpec, LbfgsOptions, PhysicsInverseSpec};
use varphys::models::{Activation, AmortizedGaussian, IdentityMap, LinearMap, Mlp, MlpMap, MlpShape, PinnField};
use varphys::objectives::{BayesVi, DynObjective, GaussianLikelihood, Objective, ResidualModel, Vae};
use varphys::pde::{assemble_weak_residual, solve_poisson_fem, BasisSet, FieldCoefficients, IntervalMesh, ObservationModel, SourceField};
use varphys::prob::divergence::{js_alpha, kl_gaussian_closed, kl_monte_carlo};
use varphys::prob::{CovarianceKind, FlowStack, Gaussian, GaussianVariational, RandomStream};
use varphys::train::gradcheck::compare;
use varphys::train::{finite_difference, train, GradCheckOptions, OptimizerState, Schedule, TrainConfig};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, u64, Box<dyn FnOnce() -> Check + 'a>);
type Case<'a> = (&'static str, SourceField<f64>, &'a dyn Fn(f64) -> f64);

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_varphys")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`varphys {}` exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn fit(config: &str, out: &Path, extra: &[&str]) -> Result<Value, String> {
    let cfg = configs().join(format!("{config}.json"));
    let mut args = vec!["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cli(&args)?;
    let name = if extra.contains(&"--check-grad") { "gradcheck.json" } else { "summary.json" };
    let text = std::fs::read_to_string(out.join(name)).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit(n: usize) -> IntervalMesh<f64> {
    IntervalMesh::unit(n).unwrap()
}

fn ones(mesh: &IntervalMesh<f64>) -> FieldCoefficients<f64> {
    FieldCoefficients::constant(BasisSet::per_element(mesh.clone()), 1.0)
}

fn l2_error(u: &FieldCoefficients<f64>, exact: &dyn Fn(f64) -> f64) -> f64 {
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

fn fem_order() -> Check {
    let sine = |x: f64| (PI * x).sin();
    let quad = |x: f64| x * (1.0 - x);
    let cases: [Case; 2] = [
        ("sine", SourceField::function(|x: f64| -PI * PI * (PI * x).sin()), &sine),
        ("quadratic", SourceField::Constant(-2.0), &quad),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, f, exact) in cases {
        let err = |n: usize| {
            let mesh = unit(n);
            solve_poisson_fem(&ones(&mesh), &f, &mesh).map(|u| l2_error(&u, exact)).map_err(|e| e.to_string())
        };
        let ratio = err(33)? / err(65)?;
        ok &= (3.5..=4.5).contains(&ratio);
        detail.push(format!("{name} ratio {ratio:.3}"));
    }
    ensure(ok, detail.join(", "))
}

fn discrete_residual() -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let s = RandomStream::new(1000, k);
        let n = 9 + (k as usize % 4) * 8;
        let mesh = unit(n);
        let cells = 1 + k as usize % 4;
        let z: Vec<f64> = s.substream(0).uniforms::<f64>(cells).iter().map(|u| 0.1 + 5.0 * u).collect();
        let f: Vec<f64> = s.substream(1).normals::<f64>(n).iter().map(|v| 3.0 * v).collect();
        let zf = FieldCoefficients::new(BasisSet::piecewise_constant(mesh.clone(), cells).unwrap(), z).unwrap();
        let src = SourceField::Field(FieldCoefficients::new(BasisSet::hat(mesh.clone()), f).unwrap());
        let u = solve_poisson_fem(&zf, &src, &mesh).map_err(|e| e.to_string())?;
        let r = assemble_weak_residual(&u, &zf, &src, &BasisSet::hat(mesh.clone())).map_err(|e| e.to_string())?;
        worst = worst.max(r.norm_inf());
    }
    ensure(worst <= 1e-10, format!("max ‖r‖∞ {worst:.2e} over 50 cases"))
}

fn gradient_suite(tmp: &Path) -> Check {
    let names = [
        "bayes_vi",
        "data_free_elbo",
        "data_free_rkl",
        "dgp_point",
        "dgp_vi",
        "elbo",
        "forward_kl",
        "js_vae",
        "small_data",
        "surrogate_flow",
        "vae",
    ];
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for name in names {
        let v = fit(&format!("fit_{name}"), &tmp.join(name), &["--check-grad"]);
        match v {
            Ok(v) if v["passed"] == true && v["points"].as_u64() >= Some(10) => {
                worst = worst.max(v["max_rel_error"].as_f64().unwrap_or(f64::NAN));
            }
            Ok(v) => failed.push(format!("{name}: {v}")),
            Err(e) => failed.push(e),
        }
    }
    // raw network parameter gradients
    let shape = MlpShape::dense(3, &[8, 8], 2, Activation::Tanh).unwrap();
    let opts = GradCheckOptions::default();
    for k in 0..10 {
        let net = Mlp::<f64>::init(shape.clone(), &RandomStream::new(2000, k));
        let x = RandomStream::new(2001, k).normals::<f64>(3);
        let g = net.gradients(&x).map_err(|e| e.to_string())?;
        for (out, analytic) in g.params.iter().enumerate() {
            let fd = finite_difference(|p| Ok(shape.forward_with(p, &x)?[out]), net.params(), opts.step).map_err(|e| e.to_string())?;
            let r = compare(analytic.clone(), fd, &opts);
            worst = worst.max(r.max_rel_error);
            if !r.passed {
                failed.push(format!("mlp_gradients point {k}: {:e}", r.max_rel_error));
            }
        }
    }
    ensure(failed.is_empty(), format!("12 suites, max rel error {worst:.2e} {}", failed.join("; ")))
}

fn conjugate(samples: usize) -> BayesVi<GaussianVariational, GaussianLikelihood<IdentityMap, f64>, Gaussian<f64>, f64> {
    let lik = GaussianLikelihood::isotropic(IdentityMap { dim: 1 }, 1.0).unwrap();
    BayesVi::new(GaussianVariational::diagonal(1).unwrap(), lik, Gaussian::standard(1).unwrap(), vec![2.0], samples).unwrap()
}

fn log_normal(x: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * x * x / var
}

fn conjugate_recovery() -> Check {
    // 64 samples keep the final iterate's gradient noise well inside the tolerance
    let obj = conjugate(64);
    let steps = 5000;
    let mut opt = OptimizerState::adam(2).with_schedule(Schedule::Cosine { total: steps, min_lr: 1e-4 });
    opt.lr = 0.05;
    let p = train(&obj, None, obj.init_params(&RandomStream::new(0, 0)), &mut opt, &TrainConfig::new(steps, 1))
        .map_err(|e| e.to_string())?
        .params;
    let g = GaussianVariational::diagonal(1).unwrap().distribution(&p).map_err(|e| e.to_string())?;
    let (m, v) = (g.mean()[0], g.covariance()[0]);
    let j = conjugate(4096).with_mc_kl().value(&p, &RandomStream::new(9, 9)).map_err(|e| e.to_string())?.value;
    let gap = j + log_normal(2.0, 2.0);
    ensure(
        (m - 1.0).abs() <= 0.02 && (v / 0.5 - 1.0).abs() <= 0.02 && gap <= 1e-2,
        format!("mean {m:.4}, var {v:.4}, J*+log p(y) {gap:.2e}"),
    )
}

fn elbo_bound() -> Check {
    let obj = conjugate(256).with_mc_kl();
    let fam = GaussianVariational::diagonal(1).unwrap();
    let log_py = log_normal(2.0, 2.0);
    let mut g = RandomStream::new(2, 0).generator();
    let mut violations = 0;
    for k in 0..100 {
        let q = Gaussian::diagonal(vec![g.uniform_in(-2.0, 3.0)], &[g.uniform_in(0.2, 2.0)]).unwrap();
        let e = obj.value(&fam.params_for(&q).unwrap(), &RandomStream::new(3, k)).map_err(|e| e.to_string())?;
        if -e.value > log_py + 3.0 * e.std_error {
            violations += 1;
        }
    }
    let post = Gaussian::diagonal(vec![1.0], &[0.5f64.sqrt()]).unwrap();
    let e = obj.value(&fam.params_for(&post).unwrap(), &RandomStream::new(4, 0)).map_err(|e| e.to_string())?;
    // the estimator has zero variance at the exact posterior, so allow rounding
    let gap = (-e.value - log_py).abs();
    ensure(
        violations == 0 && gap <= 3.0 * e.std_error + 1e-12,
        format!("{violations}/100 bound violations, gap at posterior {gap:.2e} (3 SE {:.2e})", 3.0 * e.std_error),
    )
}

fn divergences() -> Check {
    let mut fails = 0;
    for k in 0..20 {
        let s = RandomStream::new(3000, k);
        let m = s.substream(0).normals::<f64>(4);
        let sd: Vec<f64> = s.substream(1).uniforms::<f64>(4).iter().map(|u| 0.5 + u).collect();
        let q = Gaussian::diagonal(m[..2].to_vec(), &sd[..2]).unwrap();
        let p = Gaussian::diagonal(m[2..].to_vec(), &sd[2..]).unwrap();
        let mc = kl_monte_carlo(&q, &p, 100_000, &s.substream(2)).map_err(|e| e.to_string())?;
        let exact = kl_gaussian_closed(&q, &p).map_err(|e| e.to_string())?.value;
        if (mc.value - exact).abs() > 3.0 * mc.std_error {
            fails += 1;
        }
    }
    let q = Gaussian::<f64>::diagonal(vec![1.0], &[1.0]).unwrap();
    let p = Gaussian::<f64>::standard(1).unwrap();
    let js1 = js_alpha(&q, &p, 1.0, 100_000, &RandomStream::new(3100, 0)).map_err(|e| e.to_string())?;
    let kl = kl_gaussian_closed(&q, &p).map_err(|e| e.to_string())?.value;
    let reduces = (js1.value - kl).abs() <= 3.0 * js1.std_error;
    let a = js_alpha(&q, &p, 0.5, 100_000, &RandomStream::new(3101, 0)).map_err(|e| e.to_string())?;
    let b = js_alpha(&p, &q, 0.5, 100_000, &RandomStream::new(3102, 0)).map_err(|e| e.to_string())?;
    let symmetric = (a.value - b.value).abs() <= 3.0 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    ensure(
        fails == 0 && reduces && symmetric,
        format!(
            "{fails}/20 KL pairs outside 3 SE, JS(α=1) {:.4} vs KL {kl:.4}, JS(½) {:.4} vs {:.4}",
            js1.value, a.value, b.value
        ),
    )
}

fn flow_integrity() -> Check {
    let perturbed = |flow: &FlowStack<f64>, seed: u64| {
        let base = flow.init_params(&RandomStream::new(seed, 0));
        let eps = RandomStream::new(seed, 1).normals::<f64>(base.len());
        base.iter().zip(eps).map(|(b, e)| b + 0.3 * e).collect::<Vec<f64>>()
    };
    let (mut round, mut logdet): (f64, f64) = (0.0, 0.0);
    for (cond_dim, conds) in [(0usize, 1u64), (2, 10)] {
        let flow = FlowStack::<f64>::new(2, cond_dim, 4, &[8]).unwrap();
        let params = perturbed(&flow, 4000 + cond_dim as u64);
        for c in 0..conds {
            let cond = RandomStream::new(4100, c).normals::<f64>(cond_dim);
            for k in 0..5 {
                let w = RandomStream::new(4200 + c, k).normals::<f64>(2);
                let (z, ld) = flow.forward_with(&params, &w, &cond).map_err(|e| e.to_string())?;
                let (back, _) = flow.inverse_with(&params, &z, &cond).map_err(|e| e.to_string())?;
                round = w.iter().zip(&back).fold(round, |m, (a, b)| m.max((a - b).abs()));
                let h = 1e-6;
                let mut jac = [[0.0; 2]; 2];
                for j in 0..2 {
                    let (mut wp, mut wm) = (w.clone(), w.clone());
                    wp[j] += h;
                    wm[j] -= h;
                    let zp = flow.forward_with(&params, &wp, &cond).map_err(|e| e.to_string())?.0;
                    let zm = flow.forward_with(&params, &wm, &cond).map_err(|e| e.to_string())?.0;
                    for i in 0..2 {
                        jac[i][j] = (zp[i] - zm[i]) / (2.0 * h);
                    }
                }
                let fd = (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]).abs().ln();
                logdet = logdet.max((fd - ld).abs());
            }
        }
    }
    ensure(round <= 1e-8 && logdet <= 1e-4, format!("round trip {round:.1e}, log-det {logdet:.1e}"))
}

fn amortized_forward_kl(tmp: &Path) -> Check {
    let v = fit("fit_forward_kl", &tmp.join("forward_kl"), &[])?;
    let rows = v["result"]["conditions"].as_array().cloned().unwrap_or_default();
    let mut ok = rows.len() == 5;
    let mut detail = Vec::new();
    for r in &rows {
        let y = r["condition"][0].as_f64().unwrap_or(f64::NAN);
        let m = r["posterior"]["mean"][0].as_f64().unwrap_or(f64::NAN);
        let var = r["posterior"]["covariance"][0].as_f64().unwrap_or(f64::NAN);
        // relative error in the mean is measured against max(|y/2|, ½) so y = 0 stays meaningful
        let em = (m - y / 2.0).abs() / (y / 2.0).abs().max(0.5);
        let ev = (var / 0.5 - 1.0).abs();
        ok &= em <= 0.05 && ev <= 0.10;
        detail.push(format!("y={y}: mean {m:.3} var {var:.3}"));
    }
    ensure(ok, detail.join(", "))
}

fn data_free(tmp: &Path) -> Check {
    let v = fit("fit_data_free_elbo", &tmp.join("data_free_elbo"), &[])?;
    let rows = v["result"]["draws"].as_array().cloned().unwrap_or_default();
    let fwd = rows.iter().map(|r| r["forward_rel_l2"].as_f64().unwrap_or(f64::NAN)).fold(0.0, f64::max);
    let inv = rows.iter().map(|r| r["inverse_rel_l2"].as_f64().unwrap_or(f64::NAN)).fold(0.0, f64::max);
    ensure(
        rows.len() == 10 && fwd <= 0.05 && inv <= 0.10,
        format!("{} draws, max forward rel L2 {fwd:.4}, max inverse rel error {inv:.4}", rows.len()),
    )
}

fn piecewise_data(zt: &[f64], nodes: usize, sensors: &[f64]) -> Vec<f64> {
    let mesh = unit(nodes);
    let m = ResidualModel::new(mesh.clone(), BasisSet::piecewise_constant(mesh.clone(), 2).unwrap(), SourceField::Constant(-2.0)).unwrap();
    let u = FieldCoefficients::from_interior(mesh, &m.solve(zt).unwrap()).unwrap();
    sensors.iter().map(|&x| u.interpolate(x).unwrap()).collect()
}

fn inversion() -> Check {
    let tight = LbfgsOptions {
        max_iters: 2000,
        gtol: 1e-10,
        memory: 10,
    };
    let mut tik: f64 = 0.0;
    for k in 0..20 {
        let s = RandomStream::new(5000, k);
        let (m, n) = (6, 4);
        let a = s.substream(0).normals::<f64>(m * n);
        let y = s.substream(1).normals::<f64>(m);
        let beta = 0.1 + s.substream(2).uniforms::<f64>(1)[0];
        let spec = InverseProblemSpec {
            y: y.clone(),
            binding: ForwardBinding::Linear(LinearMap::new(a.clone(), m, n).unwrap()),
            beta,
        };
        let r = tikhonov_invert(&spec, &[0.0; 4], &tight).map_err(|e| e.to_string())?;
        let am = DMatrix::from_row_slice(m, n, &a);
        let lhs = am.transpose() * &am + DMatrix::identity(n, n) * beta;
        let exact = lhs.lu().solve(&(am.transpose() * DVector::from_vec(y))).ok_or("singular normal equations")?;
        tik = r.z.iter().zip(exact.iter()).fold(tik, |m, (z, e)| m.max((z - e).abs()));
    }
    let zt = [1.5, 0.6];
    let mesh = unit(17);
    let model = ResidualModel::new(mesh.clone(), BasisSet::piecewise_constant(mesh.clone(), 2).unwrap(), SourceField::Constant(-2.0))
        .unwrap()
        .with_log_params();
    let sensors = mesh.nodes()[1..16].to_vec();
    let spec = PhysicsInverseSpec {
        model: model.clone(),
        obs: ObservationModel::isotropic(&mesh, sensors.clone(), 1.0).unwrap(),
        y: piecewise_data(&zt, 17, &sensors),
        beta: 1.0,
        alternating: false,
    };
    let fem = physics_regularized_invert(&spec, &[0.0; 15], &[1.0, 1.0], &tight).map_err(|e| e.to_string())?.z;
    let pinn = PinnField::new(&[16, 16], 0.0, 1.0).unwrap();
    let points: Vec<f64> = (0..40).map(|i| (i as f64 + 0.5) / 40.0).filter(|x| (x - 0.5f64).abs() > 0.1).collect();
    let sensors: Vec<f64> = (1..64).map(|i| i as f64 / 64.0).collect();
    let spec = PhysicsInverseSpec {
        model: model.with_collocation(pinn.clone(), points).unwrap(),
        obs: ObservationModel::isotropic(&mesh, sensors.clone(), 1.0).unwrap(),
        y: piecewise_data(&zt, 65, &sensors),
        beta: 1e-3,
        alternating: false,
    };
    let opts = LbfgsOptions {
        max_iters: 5000,
        gtol: 1e-10,
        memory: 20,
    };
    let pinn_z = physics_regularized_invert(&spec, &pinn.init_params(&RandomStream::new(1, 1)), &[1.0, 1.0], &opts)
        .map_err(|e| e.to_string())?
        .z;
    let rel = |z: &[f64]| z.iter().zip(&zt).map(|(a, t)| (a / t - 1.0).abs()).fold(0.0, f64::max);
    let (ef, ep) = (rel(&fem), rel(&pinn_z));
    ensure(
        tik <= 1e-6 && ef <= 0.02 && ep <= 0.05,
        format!("tikhonov max error {tik:.1e}, FEM trial {fem:.4?} ({ef:.2e}), PINN trial {pinn_z:.4?} ({ep:.2e})"),
    )
}

fn mini_batches() -> Check {
    let data = vec![vec![0.3, -0.2], vec![1.1, 0.4], vec![-0.7, 0.9], vec![0.05, -1.3]];
    let enc = AmortizedGaussian::new(1, 2, &[4], CovarianceKind::Diagonal).unwrap();
    let dec = GaussianLikelihood::isotropic(
        MlpMap {
            shape: MlpShape::dense(1, &[4], 2, Activation::Tanh).unwrap(),
        },
        0.5,
    )
    .unwrap();
    let vae = Vae::new(enc, dec, Gaussian::standard(1).unwrap(), data, 3).unwrap();
    let params: Vec<f64> = RandomStream::new(6, 0).normals::<f64>(vae.layout().len()).iter().map(|v| 0.3 * v).collect();
    let noise = RandomStream::new(6, 1);
    let full = vae.value(&params, &noise).map_err(|e| e.to_string())?.value;
    let mut acc = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            let b = vae.clone().with_batch(vec![i, j]).map_err(|e| e.to_string())?;
            acc += b.value(&params, &noise).map_err(|e| e.to_string())?.value;
        }
    }
    let diff = (acc / 6.0 - full).abs();
    ensure(diff <= 1e-10, format!("|mean over 6 batches − full| = {diff:.1e}"))
}

/// File contents with wall-clock fields removed.
fn normalized(path: &Path) -> Result<Vec<u8>, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
    if name == "manifest.json" {
        let mut v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        v.as_object_mut().map(|o| o.remove("wall_ms"));
        return Ok(v.to_string().into_bytes());
    }
    if name.ends_with(".csv") {
        let text = String::from_utf8(bytes).map_err(|e| e.to_string())?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        let keep: Vec<usize> = (0..header.len()).filter(|&i| header[i] != "wall_ms").collect();
        let mut out = String::new();
        for line in std::iter::once(header.join(",")).chain(lines.map(String::from)) {
            let cells: Vec<&str> = line.split(',').collect();
            out.push_str(&keep.iter().filter_map(|&i| cells.get(i).copied()).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        return Ok(out.into_bytes());
    }
    Ok(bytes)
}

fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let list = |d: &Path| std::fs::read_dir(d).map_err(|e| format!("{}: {e}", d.display()));
    let mut names: Vec<_> = list(a)?.filter_map(|e| e.ok()).map(|e| e.file_name()).collect();
    names.sort();
    let mut other: Vec<_> = list(b)?.filter_map(|e| e.ok()).map(|e| e.file_name()).collect();
    other.sort();
    if names != other {
        return Err(format!("{} and {} list different files", a.display(), b.display()));
    }
    for n in &names {
        if normalized(&a.join(n))? != normalized(&b.join(n))? {
            return Err(format!("{} differs between runs", Path::new(n).display()));
        }
    }
    Ok(names.len())
}

fn determinism(tmp: &Path) -> Check {
    let runs = [
        ("solve", "solve_quadratic"),
        ("invert", "invert_tikhonov"),
        ("invert", "invert_physics"),
        ("fit", "fit_bayes_vi"),
        ("fit", "fit_elbo"),
        ("fit", "fit_vae"),
        ("fit", "fit_dgp_point"),
        ("fit", "fit_small_data"),
    ];
    let path = |stem: &str| configs().join(format!("{stem}.json")).to_string_lossy().into_owned();
    for (cmd, stem) in runs {
        for round in ["a", "b"] {
            let out = tmp.join(round).join(stem);
            cli(&[cmd, "--config", &path(stem), "--out", out.to_str().unwrap()])?;
        }
    }
    for cmd in ["solve", "invert", "fit"] {
        let stems: Vec<&str> = runs.iter().filter(|r| r.0 == cmd).map(|r| r.1).collect();
        // a lone config writes straight into --out
        let out = if stems.len() == 1 { tmp.join("batch").join(stems[0]) } else { tmp.join("batch") };
        let mut args = vec![cmd.to_string(), "--jobs".into(), "4".into(), "--out".into(), out.to_string_lossy().into_owned()];
        for stem in stems {
            args.push("--config".into());
            args.push(path(stem));
        }
        cli(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
    }
    let mut files = 0;
    for (_, stem) in runs {
        files += same_tree(&tmp.join("a").join(stem), &tmp.join("b").join(stem))?;
        same_tree(&tmp.join("a").join(stem), &tmp.join("batch").join(stem))?;
    }
    Ok(format!("{} configs, {files} files identical across reruns and --jobs 4", runs.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();
    let criteria: Vec<Criterion> = vec![
        ("FEM order", 1, Box::new(fem_order)),
        ("discrete-solution residual", 5, Box::new(discrete_residual)),
        ("gradient suite", 120, Box::new(|| gradient_suite(&root.join("grad")))),
        ("conjugate recovery", 30, Box::new(conjugate_recovery)),
        ("ELBO bound", 30, Box::new(elbo_bound)),
        ("divergence cross-checks", 60, Box::new(divergences)),
        ("flow integrity", 30, Box::new(flow_integrity)),
        ("amortized forward KL", 180, Box::new(|| amortized_forward_kl(root))),
        ("data-free residual VI", 600, Box::new(|| data_free(root))),
        ("inversion oracles", 180, Box::new(inversion)),
        ("mini-batch unbiasedness", 5, Box::new(mini_batches)),
        ("determinism", 60, Box::new(|| determinism(&root.join("det")))),
    ];
    // ACCEPTANCE_ONLY=3,12 runs a subset
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let timely = took <= Duration::from_secs(budget);
        let (ok, detail) = match result {
            Ok(d) => (timely, d),
            Err(d) => (false, d),
        };
        if !ok {
            failures += 1;
        }
        let late = if timely { "" } else { " over budget" };
        println!(
            "{} {:>2} {name}: {detail} [{:.2} s / {budget} s{late}]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64()
        );
    }
    println!("{}/12 criteria passed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
