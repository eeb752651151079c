#![allow(dead_code)]

use std::f64::consts::TAU;

use loopspace::action::{ActionModel, PhasePoint};
use loopspace::flow::FlowConfig;
use loopspace::geometry::{LoopPath, ModelManifold, TangentFieldSamples};
use loopspace::hamiltonian::HamiltonianSpec;
use loopspace::minimax::family_alpha;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_MODES: usize = 32;
pub const DEFAULT_S: f64 = 0.75;

/// Loop with winding in `[-2, 2]ⁿ` and a periodic part of `modes` modes whose
/// amplitudes decay like `amp / m²`.
pub fn random_loop(rng: &mut ChaCha8Rng, manifold: &ModelManifold, modes: usize, amp: f64) -> LoopPath {
    let n = manifold.dim();
    let winding = (0..n).map(|_| rng.gen_range(-2..=2)).collect();
    let base = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut coeff = |m: usize| -> Vec<f64> {
        (0..n)
            .map(|_| amp * rng.gen_range(-1.0..1.0) / ((m + 1) * (m + 1)) as f64)
            .collect()
    };
    let cos = (0..modes).map(&mut coeff).collect();
    let sin = (0..modes).map(&mut coeff).collect();
    LoopPath::new(manifold.clone(), winding, base, cos, sin).unwrap()
}

/// Band-limited random field with `modes` modes on `nodes` nodes.
pub fn random_field(rng: &mut ChaCha8Rng, dim: usize, modes: usize, nodes: usize, decay: f64) -> TangentFieldSamples {
    let coeffs: Vec<Vec<[f64; 2]>> = (0..=modes)
        .map(|_| (0..dim).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect())
        .collect();
    TangentFieldSamples::from_fn(dim, nodes, |t| {
        (0..dim)
            .map(|k| {
                let mut v = coeffs[0][k][0];
                for (m, c) in coeffs.iter().enumerate().skip(1) {
                    let arg = TAU * m as f64 * t;
                    v += (m as f64).powf(-decay) * (c[k][0] * arg.cos() + c[k][1] * arg.sin());
                }
                v
            })
            .collect()
    })
}

pub fn torus2() -> ModelManifold {
    ModelManifold::flat_torus(2).unwrap()
}

pub fn random_manifold(rng: &mut ChaCha8Rng) -> ModelManifold {
    match rng.gen_range(0..3) {
        0 => ModelManifold::embedded_circle(),
        1 => ModelManifold::flat_torus(1).unwrap(),
        _ => torus2(),
    }
}

/// The default scenario: `T*T²`, `C = {straight loop of winding (1, 0)}`.
pub fn default_family() -> Vec<LoopPath> {
    vec![LoopPath::straight(torus2(), vec![1, 0], vec![0.0, 0.0]).unwrap()]
}

pub fn default_config(modes: usize) -> FlowConfig {
    let spec = HamiltonianSpec::default_scenario(1.0);
    let mut probe = FlowConfig::derived(1.0, 2.0, 0.5);
    probe.modes = modes;
    let alpha = family_alpha(&default_family(), &spec, &probe).unwrap();
    let mut cfg = FlowConfig::derived(alpha, 2.0, 0.5);
    cfg.modes = modes;
    cfg.s = DEFAULT_S;
    cfg
}

/// Random phase point with `|p|` spread over every branch of `H_r`.
pub fn random_phase_point(rng: &mut ChaCha8Rng, modes: usize) -> PhasePoint {
    let m = torus2();
    let lm = rng.gen_range(0..=modes.min(6));
    let path = random_loop(rng, &m, lm, 0.05);
    let mean = rng.gen_range(0.0..1.6);
    let angle = rng.gen_range(0.0..TAU);
    let wobble = random_field(rng, 2, modes.min(6), 2 * modes + 1, 2.0);
    let mut vals = Vec::with_capacity(2 * wobble.node_count());
    for i in 0..wobble.node_count() {
        let w = wobble.at(i);
        vals.push(mean * angle.cos() + 0.03 * w[0]);
        vals.push(mean * angle.sin() + 0.03 * w[1]);
    }
    let p = TangentFieldSamples::from_flat(2, vals).unwrap();
    PhasePoint::from_samples(path, &p, modes, DEFAULT_S).unwrap()
}

pub fn report(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

/// The flow linearized at a critical point `x` of the action, in coordinates
/// `u = G^{1/2} δz` where the linear flow is `u' = −W u`.
pub struct Linearization {
    pub point: PhasePoint,
    pub winding: Vec<i64>,
    /// Frame coordinates `(q, p)` of the critical point.
    pub z0: Vec<f64>,
    /// Diagonal of `G^{−1/2}`.
    pub g_half: Vec<f64>,
    pub eig: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl Linearization {
    /// Hessian by central differences of the L² gradient, exact where the
    /// action is quadratic (`|p| ≥ 2ρ₁`).
    pub fn at(x: &PhasePoint, spec: &HamiltonianSpec) -> Self {
        let model = ActionModel::for_point(x, spec);
        let d = x.frame().len();
        let z0: Vec<f64> = x.q_coeffs().iter().chain(x.p_coeffs()).copied().collect();
        let grad_at = |z: &[f64]| {
            let (gh, gv) = model.l2_gradient(&z[..d], &z[d..]);
            DVector::from_vec(gh.into_iter().chain(gv).collect())
        };
        let mut hess = DMatrix::zeros(2 * d, 2 * d);
        for j in 0..2 * d {
            let (mut a, mut b) = (z0.clone(), z0.clone());
            a[j] += 1e-4;
            b[j] -= 1e-4;
            hess.set_column(j, &((grad_at(&a) - grad_at(&b)) / 2e-4));
        }
        let g_half: Vec<f64> = model
            .horizontal_weights()
            .iter()
            .chain(model.vertical_weights())
            .map(|w| w.sqrt())
            .collect();
        let scale = DMatrix::from_diagonal(&DVector::from_vec(g_half.clone()));
        let w = &scale * (&hess + hess.transpose()) * 0.5 * &scale;
        Linearization {
            point: x.clone(),
            winding: x.path().winding().to_vec(),
            z0,
            g_half,
            eig: SymmetricEigen::new(w),
        }
    }

    /// `x + G^{−1/2} u` with `u` a random combination of the eigenvectors
    /// whose rate passes `keep`, scaled to metric norm `size`.
    pub fn perturbed(&self, rng: &mut ChaCha8Rng, keep: impl Fn(f64) -> bool, size: f64) -> PhasePoint {
        let n = self.z0.len();
        let mut u = DVector::zeros(n);
        for (i, mu) in self.eig.eigenvalues.iter().enumerate() {
            if keep(*mu) {
                u += self.eig.eigenvectors.column(i) * rng.gen_range(-1.0..1.0);
            }
        }
        u *= size / u.norm();
        self.shifted(&u)
    }

    pub fn shifted(&self, u: &DVector<f64>) -> PhasePoint {
        let d = self.z0.len() / 2;
        let z: Vec<f64> = (0..2 * d).map(|j| self.z0[j] + u[j] * self.g_half[j]).collect();
        let x = &self.point;
        PhasePoint::from_coeffs(x.path().manifold(), x.frame().clone(), &self.winding, z[..d].to_vec(), z[d..].to_vec(), x.s())
            .unwrap()
    }

    /// Metric distance of `y` from the critical point.
    pub fn distance(&self, y: &PhasePoint) -> f64 {
        y.q_coeffs()
            .iter()
            .chain(y.p_coeffs())
            .zip(&self.z0)
            .zip(&self.g_half)
            .map(|((a, b), g)| ((a - b) / g).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
