mod common;

use std::f64::consts::TAU;

use approx::assert_relative_eq;
use common::*;
use loopspace::geometry::{LoopPath, ModelManifold, TangentFieldSamples};
use loopspace::spectral::{
    adjoint_inclusion, eigendecompose, eigendecompose_dense, fractional_apply, inner_r, inner_r_emb, FiberField,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frames_are_orthonormal_eigenbases(seed in any::<u64>(), modes in 4usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_manifold(&mut rng);
        let lm = rng.gen_range(0..5);
        let path = random_loop(&mut rng, &m, lm, 0.2);
        let frame = eigendecompose(&path, modes).unwrap();
        prop_assert_eq!(frame.len(), m.dim() * (2 * modes + 1));
        prop_assert!(frame.orthogonality_defect() <= 1e-10);
        prop_assert!(frame.residual() <= 1e-8);
        prop_assert_eq!(frame.kernel_dim(), m.dim());
        prop_assert!(frame.eigenvalues().windows(2).all(|w| w[0] <= w[1] + 1e-9));
    }

    #[test]
    fn dense_and_analytic_spectra_agree(seed in any::<u64>(), modes in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_manifold(&mut rng);
        let lm = rng.gen_range(0..3);
        let path = random_loop(&mut rng, &m, lm, 0.1);
        let a = eigendecompose(&path, modes).unwrap();
        let d = eigendecompose_dense(&path, modes).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(d.eigenvalues()) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x));
        }
        prop_assert!(d.orthogonality_defect() <= 1e-10);
    }

    #[test]
    fn fractional_powers_compose(seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_manifold(&mut rng);
        let path = random_loop(&mut rng, &m, 2, 0.1);
        let frame = eigendecompose(&path, 12).unwrap();
        let xi = FiberField::from_samples(frame.clone(), &random_field(&mut rng, m.dim(), 12, 25, 1.0)).unwrap();
        let twice = fractional_apply(&frame, a, &fractional_apply(&frame, b, &xi).unwrap()).unwrap();
        let once = fractional_apply(&frame, a + b, &xi).unwrap();
        for (x, y) in twice.coeffs().iter().zip(once.coeffs()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
        let zeta = FiberField::from_samples(frame.clone(), &random_field(&mut rng, m.dim(), 12, 25, 1.0)).unwrap();
        let (ab, ba) = (inner_r(&frame, a, &xi, &zeta).unwrap(), inner_r(&frame, a, &zeta, &xi).unwrap());
        assert_relative_eq!(ab, ba, max_relative = 1e-12, epsilon = 1e-14);
        prop_assert!(inner_r(&frame, a, &xi, &xi).unwrap() >= 0.0);
    }

    #[test]
    fn adjoint_inclusion_is_an_adjoint(seed in any::<u64>(), s in 0.55f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_manifold(&mut rng);
        let path = random_loop(&mut rng, &m, 2, 0.1);
        let frame = eigendecompose(&path, 10).unwrap();
        let field = |rng: &mut ChaCha8Rng| {
            FiberField::from_samples(frame.clone(), &random_field(rng, m.dim(), 10, 21, 1.0)).unwrap()
        };
        let (v, w) = (field(&mut rng), field(&mut rng));
        // ⟨ȷ* v, w⟩_{1−s} = ⟨v, w⟩_{L²}
        let lhs = inner_r(&frame, 1.0 - s, &adjoint_inclusion(&frame, s, &v).unwrap(), &w).unwrap();
        let rhs = inner_r(&frame, 0.0, &v, &w).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10, epsilon = 1e-12);
    }

    #[test]
    fn chart_norms_are_equivalent_per_loop(seed in any::<u64>(), r in 0.1f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_manifold(&mut rng);
        let lm = rng.gen_range(0..3);
        let path = random_loop(&mut rng, &m, lm, 0.1);
        let frame = eigendecompose(&path, 8).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..200 {
            let decay = rng.gen_range(0.5..2.0);
            let v = random_field(&mut rng, m.dim(), 8, 17, decay);
            let intrinsic = inner_r(&frame, r, &FiberField::from_samples(frame.clone(), &v).unwrap(), &FiberField::from_samples(frame.clone(), &v).unwrap()).unwrap();
            let ratio = inner_r_emb(&path, r, &v, &v).unwrap() / intrinsic;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        prop_assert!(lo > 0.0 && hi.is_finite() && lo <= hi);
    }
}

#[test]
fn circle_equivalence_constant_grows_with_winding() {
    let circle = ModelManifold::embedded_circle();
    for r in [0.25, 0.5, 1.0] {
        let mut last = 0.0;
        for n in 1..=8 {
            let path = LoopPath::straight(circle.clone(), vec![n], vec![0.0]).unwrap();
            let frame = eigendecompose(&path, 16).unwrap();
            let p = TangentFieldSamples::from_fn(1, frame.coarse_nodes(), |_| vec![1.0]);
            let fiber = FiberField::from_samples(frame.clone(), &p).unwrap();
            assert_relative_eq!(fiber.norm(r), 1.0, epsilon = 1e-12);
            let ratio = inner_r_emb(&path, r, &p, &p).unwrap();
            assert_relative_eq!(ratio, (1.0 + (TAU * n as f64).powi(2)).powf(r), max_relative = 1e-10);
            assert!(ratio > last);
            last = ratio;
        }
    }
}
