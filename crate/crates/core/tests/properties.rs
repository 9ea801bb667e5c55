use proptest::prelude::*;

use varphys::models::Checkpoint;
use varphys::pde::{assemble_weak_residual, solve_poisson_fem, BasisSet, FieldCoefficients, IntervalMesh, SourceField};
use varphys::prob::divergence::kl_gaussian_closed;
use varphys::prob::{FlowStack, Gaussian, GaussianVariational, RandomStream};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fem_solution_has_vanishing_weak_residual(
        z in prop::collection::vec(0.1f64..10.0, 8),
        f in prop::collection::vec(-5.0f64..5.0, 17),
    ) {
        let mesh = IntervalMesh::unit(17).unwrap();
        let zf = FieldCoefficients::new(BasisSet::piecewise_constant(mesh.clone(), 8).unwrap(), z).unwrap();
        let src = SourceField::Field(FieldCoefficients::new(BasisSet::hat(mesh.clone()), f).unwrap());
        let u = solve_poisson_fem(&zf, &src, &mesh).unwrap();
        prop_assert!(u.satisfies_dirichlet());
        let r = assemble_weak_residual(&u, &zf, &src, &BasisSet::hat(mesh.clone())).unwrap();
        prop_assert!(r.norm_inf() <= 1e-10);
    }

    #[test]
    fn flows_invert_exactly(seed in 0u64..10_000, dim in 1usize..4, couplings in 1usize..4) {
        let flow = FlowStack::<f64>::new(dim, 1, couplings, &[6]).unwrap();
        let base = flow.init_params(&RandomStream::new(seed, 0));
        let params: Vec<f64> = base.iter().zip(RandomStream::new(seed, 1).normals::<f64>(base.len())).map(|(b, e)| b + 0.3 * e).collect();
        let w = RandomStream::new(seed, 2).normals::<f64>(dim);
        let cond = [0.5];
        let (z, ld) = flow.forward_with(&params, &w, &cond).unwrap();
        let (back, ild) = flow.inverse_with(&params, &z, &cond).unwrap();
        for (a, b) in w.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
        prop_assert!((ld + ild).abs() <= 1e-8);
    }

    #[test]
    fn closed_kl_is_non_negative_and_zero_on_the_diagonal(
        mq in -3.0f64..3.0, sq in 0.1f64..3.0, mp in -3.0f64..3.0, sp in 0.1f64..3.0,
    ) {
        let q = Gaussian::diagonal(vec![mq, -mq], &[sq, sp]).unwrap();
        let p = Gaussian::diagonal(vec![mp, 0.0], &[sp, sq]).unwrap();
        prop_assert!(kl_gaussian_closed(&q, &p).unwrap().value >= 0.0);
        prop_assert!(kl_gaussian_closed(&q, &q).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn gaussian_parameters_round_trip(m in prop::collection::vec(-4.0f64..4.0, 3), s in prop::collection::vec(0.05f64..4.0, 3)) {
        let g = Gaussian::diagonal(m, &s).unwrap();
        for fam in [GaussianVariational::diagonal(3).unwrap(), GaussianVariational::full(3).unwrap()] {
            let back = fam.distribution(&fam.params_for(&g).unwrap()).unwrap();
            for (a, b) in back.covariance().iter().zip(g.covariance()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in back.mean().iter().zip(g.mean()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoints_round_trip(values in prop::collection::vec(any::<f64>(), 0..50), tag in "[a-z]{1,8}") {
        let ck = Checkpoint::new(values.clone()).with("tag", &tag);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.get("tag"), Some(tag.as_str()));
        prop_assert_eq!(back.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn substreams_are_pure_functions_of_their_path(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let x = RandomStream::new(seed, a).substream(b).normals::<f64>(4);
        let y = RandomStream::new(seed, a).substream(b).normals::<f64>(4);
        prop_assert_eq!(x, y);
    }
}
