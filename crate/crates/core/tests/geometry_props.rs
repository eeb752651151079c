mod common;

use std::f64::consts::TAU;

use common::*;
use loopspace::geometry::{covariant_derivative, embed_field, evaluate_loop, LoopPath, ModelManifold};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn manifold_for(choice: u8) -> ModelManifold {
    match choice {
        0 => ModelManifold::embedded_circle(),
        n => ModelManifold::flat_torus(n as usize).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn embedding_is_isometric(seed in any::<u64>(), choice in 0u8..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = manifold_for(choice);
        let lm = rng.gen_range(0..5);
        let path = random_loop(&mut rng, &m, lm, 0.2);
        let xi = random_field(&mut rng, m.dim(), 6, 33, 1.0);
        let ambient = embed_field(&path, &xi);
        for (i, v) in ambient.iter().enumerate() {
            let q = evaluate_loop(&path, i as f64 / 33.0);
            let euclid = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((euclid - m.norm(&q, xi.at(i))).abs() <= 1e-10);
        }
    }

    #[test]
    fn derivative_obeys_leibniz(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = ModelManifold::flat_torus(n).unwrap();
        let lm = rng.gen_range(0..4);
        let path = random_loop(&mut rng, &m, lm, 0.1);
        let nodes = 41;
        let xi = random_field(&mut rng, n, 5, nodes, 1.0);
        let (a, b, k) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(1..4) as f64);
        let f: Vec<f64> = (0..nodes).map(|i| {
            let t = i as f64 / nodes as f64;
            1.0 + a * (TAU * k * t).cos() + b * (TAU * k * t).sin()
        }).collect();
        let df: Vec<f64> = (0..nodes).map(|i| {
            let t = i as f64 / nodes as f64;
            TAU * k * (-a * (TAU * k * t).sin() + b * (TAU * k * t).cos())
        }).collect();
        let lhs = covariant_derivative(&path, &xi.multiplied(&f)).unwrap();
        let dxi = covariant_derivative(&path, &xi).unwrap();
        let rhs = xi.multiplied(&df);
        let rhs2 = dxi.multiplied(&f);
        let worst = (0..lhs.as_slice().len())
            .map(|j| (lhs.as_slice()[j] - rhs.as_slice()[j] - rhs2.as_slice()[j]).abs())
            .fold(0.0, f64::max);
        prop_assert!(worst <= 1e-9, "Leibniz defect {worst:e}");
    }

    #[test]
    fn flat_models_have_no_curvature(seed in any::<u64>(), choice in 0u8..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = manifold_for(choice);
        let mut v = || -> Vec<f64> { (0..m.dim()).map(|_| rng.gen_range(-10.0..10.0)).collect() };
        let (q, x, y, z) = (v(), v(), v(), v());
        prop_assert!(m.curvature(&q, &x, &y, &z).iter().all(|c| *c == 0.0));
        prop_assert!(m.christoffel(&q, &x, &y).iter().all(|c| *c == 0.0));
        let g = m.metric(&q);
        prop_assert_eq!(g, nalgebra::DMatrix::identity(m.dim(), m.dim()));
    }

    #[test]
    fn loop_json_round_trips(seed in any::<u64>(), choice in 0u8..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = manifold_for(choice);
        let lm = rng.gen_range(0..6);
        let path = random_loop(&mut rng, &m, lm, 0.3);
        let back = LoopPath::from_json(m.clone(), &path.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, path);
    }

    #[test]
    fn loops_close_up(seed in any::<u64>(), choice in 0u8..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = manifold_for(choice);
        let lm = rng.gen_range(0..6);
        let path = random_loop(&mut rng, &m, lm, 0.3);
        let (a, b) = (m.embed_point(&path.coords(0.0)), m.embed_point(&path.coords(1.0)));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
