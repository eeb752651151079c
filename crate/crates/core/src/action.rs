//! Phase points of the mixed-regularity bundle and the action functional
//! `𝔸(q, p) = ⟨q̇, p⟩ − ∫ H(q, p) dt`.
//!
//! A phase point is stored as its loop plus the frame coefficients of `p`.
//! Internally the loop is also expanded in the same frame: `q(t) = P∘w·t +
//! Σ q_j ξ_j(t)`, which makes `q̇ = P∘w + Σ q_j ∇ξ_j` exact in the frame and
//! turns the action and its gradient into small dense linear algebra.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::nodes;
use crate::geometry::{LoopPath, ModelManifold, TangentFieldSamples};
use crate::hamiltonian::{dh_dp, norm, Branch, HamiltonianSpec, TIE_BAND};
use crate::spectral::{eigendecompose, weighted_dot, FiberField, SpectralFrame};

pub(crate) fn check_s(s: f64) -> Result<()> {
    if s > 0.5 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("s = {s} must lie in (1/2, 1)")))
    }
}

#[derive(Clone, Debug)]
pub struct PhasePoint {
    path: LoopPath,
    fiber: FiberField,
    s: f64,
    /// Frame coefficients of `q(t) − P∘w·t`.
    q_coeffs: Vec<f64>,
}

impl PhasePoint {
    pub fn new(path: LoopPath, fiber: FiberField, s: f64) -> Result<Self> {
        check_s(s)?;
        let frame = fiber.frame().clone();
        if frame.manifold() != path.manifold() {
            return Err(Error::FrameMismatch);
        }
        if path.modes() > frame.modes() {
            return Err(Error::Aliasing {
                nodes: frame.coarse_nodes(),
                modes: path.modes(),
            });
        }
        let periodic = TangentFieldSamples::from_fn(path.dim(), frame.coarse_nodes(), |t| {
            let q = path.coords(t);
            let drift = path.drift();
            q.iter().zip(drift).map(|(q, d)| q - d * t).collect()
        });
        let q_coeffs = frame.expand(&periodic)?;
        Ok(PhasePoint {
            path,
            fiber,
            s,
            q_coeffs,
        })
    }

    /// `p` given by samples along the loop, expanded in the frame of cutoff `modes`.
    pub fn from_samples(path: LoopPath, p: &TangentFieldSamples, modes: usize, s: f64) -> Result<Self> {
        let frame = eigendecompose(&path, modes)?;
        let fiber = FiberField::from_samples(frame, p)?;
        PhasePoint::new(path, fiber, s)
    }

    pub fn zero_section(path: LoopPath, modes: usize, s: f64) -> Result<Self> {
        let frame = eigendecompose(&path, modes)?;
        PhasePoint::new(path, FiberField::zeros(frame), s)
    }

    /// Constant momentum `p(t) ≡ p`.
    pub fn constant_momentum(path: LoopPath, p: &[f64], modes: usize, s: f64) -> Result<Self> {
        let frame = eigendecompose(&path, modes)?;
        let c = frame.constant_modes() * DVector::from_column_slice(p);
        let fiber = FiberField::new(frame, c.iter().copied().collect())?;
        PhasePoint::new(path, fiber, s)
    }

    /// Rebuild from frame coordinates of the loop and the momentum.
    pub fn from_coeffs(
        manifold: &ModelManifold,
        frame: Arc<SpectralFrame>,
        winding: &[i64],
        q_coeffs: Vec<f64>,
        p_coeffs: Vec<f64>,
        s: f64,
    ) -> Result<Self> {
        check_s(s)?;
        let samples = frame.synthesize(&q_coeffs);
        let series = samples.series(frame.modes())?;
        let path = LoopPath::from_periodic(manifold.clone(), winding.to_vec(), &series)?;
        let fiber = FiberField::new(frame, p_coeffs)?;
        Ok(PhasePoint {
            path,
            fiber,
            s,
            q_coeffs,
        })
    }

    pub fn path(&self) -> &LoopPath {
        &self.path
    }

    pub fn fiber(&self) -> &FiberField {
        &self.fiber
    }

    pub fn frame(&self) -> &Arc<SpectralFrame> {
        self.fiber.frame()
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn modes(&self) -> usize {
        self.frame().modes()
    }

    pub fn q_coeffs(&self) -> &[f64] {
        &self.q_coeffs
    }

    pub fn p_coeffs(&self) -> &[f64] {
        self.fiber.coeffs()
    }

    /// Frame coefficients of `q̇`.
    pub fn velocity_coeffs(&self) -> Vec<f64> {
        ActionModel::for_point(self, &HamiltonianSpec::default_scenario(1.0))
            .velocity(&self.q_coeffs)
    }

    /// `‖p‖_{1−s}`.
    pub fn fiber_norm(&self) -> f64 {
        self.fiber.norm(1.0 - self.s)
    }

    /// `𝔼(q) = ½‖q̇‖²`.
    pub fn energy(&self) -> f64 {
        0.5 * self.velocity_coeffs().iter().map(|x| x * x).sum::<f64>()
    }

    /// `⟨q̇, p⟩`, the symplectic action of the loop `(q, p)`.
    pub fn symplectic_action(&self) -> f64 {
        self.velocity_coeffs()
            .iter()
            .zip(self.p_coeffs())
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// The gradient for the metric `⟨·ʰ,·ʰ⟩_s + ⟨·ᵛ,·ᵛ⟩_{1−s}`, in frame
/// coefficients, together with the L² partial derivatives it comes from.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGradient {
    pub horizontal: Vec<f64>,
    pub vertical: Vec<f64>,
    pub l2_horizontal: Vec<f64>,
    pub l2_vertical: Vec<f64>,
    pub norm: f64,
}

impl PhaseGradient {
    /// `d𝔸` applied to a direction given in frame coefficients.
    pub fn pairing(&self, h: &[f64], v: &[f64]) -> f64 {
        let a: f64 = self.l2_horizontal.iter().zip(h).map(|(x, y)| x * y).sum();
        let b: f64 = self.l2_vertical.iter().zip(v).map(|(x, y)| x * y).sum();
        a + b
    }
}

/// Action, gradient and Hamilton residual on frame coordinates with a fixed
/// winding class.
#[derive(Clone, Debug)]
pub struct ActionModel {
    frame: Arc<SpectralFrame>,
    spec: HamiltonianSpec,
    s: f64,
    drift: DVector<f64>,
    weights_h: Vec<f64>,
    weights_v: Vec<f64>,
}

impl ActionModel {
    pub fn new(frame: Arc<SpectralFrame>, winding: &[i64], spec: HamiltonianSpec, s: f64) -> Self {
        let n = frame.dim();
        let drift: Vec<f64> = (0..n)
            .map(|k| frame.manifold().period(k) * winding[k] as f64)
            .collect();
        let drift = frame.constant_modes() * DVector::from_vec(drift);
        let weights_h = frame.weights(-s);
        let weights_v = frame.weights(s - 1.0);
        ActionModel {
            frame,
            spec,
            s,
            drift,
            weights_h,
            weights_v,
        }
    }

    pub fn for_point(x: &PhasePoint, spec: &HamiltonianSpec) -> Self {
        ActionModel::new(x.frame().clone(), x.path().winding(), *spec, x.s())
    }

    pub fn frame(&self) -> &Arc<SpectralFrame> {
        &self.frame
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn velocity(&self, q: &[f64]) -> Vec<f64> {
        let v = &self.drift + self.frame.derivative_matrix() * DVector::from_column_slice(q);
        v.iter().copied().collect()
    }

    /// `p` on the fine nodes, node-major.
    fn fine_momentum(&self, p: &[f64]) -> DVector<f64> {
        self.frame.fine_matrix() * DVector::from_column_slice(p)
    }

    pub fn hamiltonian_mean(&self, p: &[f64]) -> f64 {
        let n = self.frame.dim();
        let pf = self.fine_momentum(p);
        let total: f64 = pf
            .as_slice()
            .chunks(n)
            .map(|pi| self.spec.profile(norm(pi)).value)
            .sum();
        total / self.frame.fine_nodes() as f64
    }

    pub fn action(&self, q: &[f64], p: &[f64]) -> f64 {
        let v = self.velocity(q);
        let pairing: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
        pairing - self.hamiltonian_mean(p)
    }

    /// Frame coefficients of `∂_p H` by fine-grid quadrature.
    fn dh_dp_coeffs(&self, p: &[f64]) -> DVector<f64> {
        let n = self.frame.dim();
        let pf = self.fine_momentum(p);
        let mut g = DVector::zeros(pf.len());
        for (i, pi) in pf.as_slice().chunks(n).enumerate() {
            let d = dh_dp(&self.spec, pi);
            g.as_mut_slice()[i * n..(i + 1) * n].copy_from_slice(&d);
        }
        self.frame.fine_matrix().tr_mul(&g) / self.frame.fine_nodes() as f64
    }

    /// L² partial derivatives `(∂𝔸/∂q_j, ∂𝔸/∂p_j)`. `H` does not depend on
    /// `q`, so the horizontal part is `⟨∇ξ_j, p⟩`.
    pub fn l2_gradient(&self, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gh = self.frame.derivative_matrix().tr_mul(&DVector::from_column_slice(p));
        let v = self.velocity(q);
        let dh = self.dh_dp_coeffs(p);
        let gv: Vec<f64> = v.iter().zip(dh.iter()).map(|(a, b)| a - b).collect();
        (gh.iter().copied().collect(), gv)
    }

    pub fn vertical_l2_gradient(&self, q: &[f64], p: &[f64]) -> Vec<f64> {
        let v = self.velocity(q);
        let dh = self.dh_dp_coeffs(p);
        v.iter().zip(dh.iter()).map(|(a, b)| a - b).collect()
    }

    pub fn gradient(&self, q: &[f64], p: &[f64]) -> PhaseGradient {
        let (gh, gv) = self.l2_gradient(q, p);
        let horizontal: Vec<f64> = gh.iter().zip(&self.weights_h).map(|(g, w)| g * w).collect();
        let vertical: Vec<f64> = gv.iter().zip(&self.weights_v).map(|(g, w)| g * w).collect();
        let norm = (weighted_dot(&self.weights_h, &gh, &gh) + weighted_dot(&self.weights_v, &gv, &gv)).sqrt();
        PhaseGradient {
            horizontal,
            vertical,
            l2_horizontal: gh,
            l2_vertical: gv,
            norm,
        }
    }

    /// `(1+λ)^{s−1}` per index, the vertical metric inverse.
    pub fn vertical_weights(&self) -> &[f64] {
        &self.weights_v
    }

    pub fn horizontal_weights(&self) -> &[f64] {
        &self.weights_h
    }

    pub fn residual(&self, q: &[f64], p: &[f64]) -> HamiltonResidual {
        let n = self.frame.dim();
        let nf = self.frame.fine_nodes();
        let qdot = self.frame.fine_matrix() * DVector::from_vec(self.velocity(q));
        let pf = self.fine_momentum(p);
        let dp = self.frame.fine_matrix()
            * (self.frame.derivative_matrix() * DVector::from_column_slice(p));
        let (mut vel, mut mom, mut sup) = (0.0, 0.0, 0.0f64);
        for i in 0..nf {
            let dh = dh_dp(&self.spec, &pf.as_slice()[i * n..(i + 1) * n]);
            for k in 0..n {
                let a = qdot[i * n + k] - dh[k];
                let b = dp[i * n + k];
                vel += a * a;
                mom += b * b;
                sup = sup.max(a.abs()).max(b.abs());
            }
        }
        HamiltonResidual {
            velocity: (vel / nf as f64).sqrt(),
            momentum: (mom / nf as f64).sqrt(),
            sup,
        }
    }
}

pub fn action(x: &PhasePoint, spec: &HamiltonianSpec) -> Result<f64> {
    let a = ActionModel::for_point(x, spec).action(x.q_coeffs(), x.p_coeffs());
    if a.is_finite() {
        Ok(a)
    } else {
        Err(Error::Invalid("action quadrature produced a non-finite value".into()))
    }
}

pub fn gradient(x: &PhasePoint, spec: &HamiltonianSpec) -> Result<PhaseGradient> {
    Ok(ActionModel::for_point(x, spec).gradient(x.q_coeffs(), x.p_coeffs()))
}

/// Residuals of `q̇ = ∂_p H` and `∇_{q̇} p = −∂_q H` on the fine grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HamiltonResidual {
    pub velocity: f64,
    pub momentum: f64,
    pub sup: f64,
}

impl HamiltonResidual {
    pub fn l2(&self) -> f64 {
        self.velocity.hypot(self.momentum)
    }
}

pub fn hamilton_residual(x: &PhasePoint, spec: &HamiltonianSpec) -> HamiltonResidual {
    ActionModel::for_point(x, spec).residual(x.q_coeffs(), x.p_coeffs())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classification {
    Constant,
    ClosedGeodesic,
    FakeGeodesic,
    OnHypersurface { sigma: f64 },
    Unclassified { reason: String },
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Constant => "constant",
            Classification::ClosedGeodesic => "closed-geodesic",
            Classification::FakeGeodesic => "fake-geodesic",
            Classification::OnHypersurface { .. } => "on-hypersurface",
            Classification::Unclassified { .. } => "unclassified",
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            Classification::OnHypersurface { sigma } => Some(*sigma),
            _ => None,
        }
    }
}

fn branch_slot(b: &Branch) -> usize {
    match b {
        Branch::Bounded => 0,
        Branch::Thickening { .. } => 1,
        Branch::Plateau => 2,
        Branch::Transition => 3,
        Branch::Quadratic => 4,
    }
}

/// Sort a critical point into the branch of `H_r` containing its image.
pub fn classify_critical(x: &PhasePoint, spec: &HamiltonianSpec, tol: f64) -> Result<Classification> {
    let model = ActionModel::for_point(x, spec);
    let g = model.gradient(x.q_coeffs(), x.p_coeffs());
    if g.norm > tol {
        return Err(Error::NotCritical { norm: g.norm, tol });
    }
    let speed = (2.0 * x.energy()).sqrt();
    if speed <= tol {
        return Ok(Classification::Constant);
    }
    let n = x.frame().dim();
    let pf = x.frame().fine_matrix() * DVector::from_column_slice(x.p_coeffs());
    let radii: Vec<f64> = pf.as_slice().chunks(n).map(norm).collect();
    // The branch shared by every node, allowing ties at boundaries.
    let mut counts = [0usize; 5];
    for &rho in &radii {
        let mut seen = [false; 5];
        for b in spec.branches_near(rho) {
            seen[branch_slot(&b)] = true;
        }
        for (c, s) in counts.iter_mut().zip(seen) {
            *c += s as usize;
        }
    }
    let shared = |slot: usize| counts[slot] == radii.len();
    let (lo, hi) = radii
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    if shared(4) {
        let gap = (action(x, spec)? - (x.energy() - spec.r)).abs();
        return Ok(if gap <= tol {
            Classification::ClosedGeodesic
        } else {
            Classification::Unclassified {
                reason: format!("kinetic image but action differs from E - r by {gap:e}"),
            }
        });
    }
    if shared(3) {
        return Ok(Classification::FakeGeodesic);
    }
    if shared(1) || (lo >= spec.inner_radius() - TIE_BAND && hi <= spec.outer_radius() + TIE_BAND) {
        let rho = 0.5 * (lo + hi);
        return Ok(Classification::OnHypersurface {
            sigma: (rho / spec.rho_star).ln(),
        });
    }
    Ok(Classification::Unclassified {
        reason: format!("image spans radii [{lo}, {hi}] across branches of H_r"),
    })
}

/// A periodic orbit of `X_{H_r}` through `(q0, p0)` with period `T`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodicOrbit {
    pub q0: Vec<f64>,
    pub p0: Vec<f64>,
    pub period: f64,
    pub winding: Vec<i64>,
}

/// `x̃(t) = x(Tt)` as a phase point for `H_{Tr}`, with the rescaled spec.
pub fn rescale_period(
    manifold: &ModelManifold,
    orbit: &PeriodicOrbit,
    spec: &HamiltonianSpec,
    modes: usize,
    s: f64,
) -> Result<(PhasePoint, HamiltonianSpec)> {
    if !(orbit.period > 0.0 && orbit.period.is_finite()) {
        return Err(Error::Invalid(format!("period {} must be positive", orbit.period)));
    }
    let rho = norm(&orbit.p0);
    if rho < spec.inner_radius() - TIE_BAND || rho > spec.outer_radius() + TIE_BAND {
        return Err(Error::OutsideThickening(format!(
            "|p| = {rho} outside [{}, {}]",
            spec.inner_radius(),
            spec.outer_radius()
        )));
    }
    let scaled = spec.with_r(orbit.period * spec.r);
    let path = LoopPath::straight(manifold.clone(), orbit.winding.clone(), orbit.q0.clone())?;
    let x = PhasePoint::constant_momentum(path, &orbit.p0, modes, s)?;
    let res = hamilton_residual(&x, &scaled);
    if res.sup > 1e-6 {
        return Err(Error::Invalid(format!(
            "orbit does not close with the given period and winding (residual {:e})",
            res.sup
        )));
    }
    Ok((x, scaled))
}

/// Straight loop with winding `w` based at `base` and `p ≡ p`.
pub fn straight_orbit(
    manifold: &ModelManifold,
    winding: &[i64],
    base: &[f64],
    p: &[f64],
    modes: usize,
    s: f64,
) -> Result<PhasePoint> {
    let path = LoopPath::straight(manifold.clone(), winding.to_vec(), base.to_vec())?;
    PhasePoint::constant_momentum(path, p, modes, s)
}

/// Uniform nodes of the fine quadrature grid of a frame.
pub fn fine_nodes(frame: &SpectralFrame) -> Vec<f64> {
    nodes(frame.fine_nodes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn torus() -> ModelManifold {
        ModelManifold::flat_torus(2).unwrap()
    }

    #[test]
    fn zero_section_has_zero_action() {
        let path = LoopPath::new(torus(), vec![1, 0], vec![0.1, 0.2], vec![vec![0.05, -0.02]], vec![vec![0.0, 0.03]]).unwrap();
        let x = PhasePoint::zero_section(path, 8, 0.75).unwrap();
        assert_eq!(action(&x, &HamiltonianSpec::default_scenario(0.5)).unwrap(), 0.0);
    }

    #[test]
    fn geodesic_action_identity() {
        let spec = HamiltonianSpec::default_scenario(0.5);
        let x = straight_orbit(&torus(), &[1, 1], &[0.0, 0.0], &[1.0, 1.0], 8, 0.75).unwrap();
        let a = action(&x, &spec).unwrap();
        assert!((a - (1.0 - 0.5)).abs() < 1e-13);
        assert!((a - (x.energy() - spec.r)).abs() < 1e-13);
        let g = gradient(&x, &spec).unwrap();
        assert!(g.norm < 1e-12);
        assert_eq!(classify_critical(&x, &spec, 1e-8).unwrap(), Classification::ClosedGeodesic);
    }

    #[test]
    fn kinetic_region_p_equals_qdot() {
        let spec = HamiltonianSpec::default_scenario(0.3);
        let path = LoopPath::new(torus(), vec![2, 0], vec![0.0, 0.0], vec![vec![0.01, 0.0]], vec![vec![0.0, 0.02]]).unwrap();
        let v = path.velocity_field(17);
        let x = PhasePoint::from_samples(path, &v, 8, 0.75).unwrap();
        // |q̇| ≥ 2ρ₁ everywhere, so H = ½|p|² + r
        let a = action(&x, &spec).unwrap();
        assert!((a - (x.energy() - spec.r)).abs() < 1e-12);
    }

    #[test]
    fn vertical_gradient_on_kernel_modes() {
        // far out in the kinetic region ∂_pH = p
        let spec = HamiltonianSpec::default_scenario(0.3);
        let x = straight_orbit(&torus(), &[1, 0], &[0.0; 2], &[1.5, 0.9], 4, 0.6).unwrap();
        let g = gradient(&x, &spec).unwrap();
        let qdot = x.velocity_coeffs();
        let w = x.frame().weights(0.6 - 1.0);
        for j in 0..qdot.len() {
            let want = w[j] * (qdot[j] - x.p_coeffs()[j]);
            assert!((g.vertical[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_point_classified() {
        let spec = HamiltonianSpec::default_scenario(0.3);
        let path = LoopPath::straight(torus(), vec![0, 0], vec![0.2, 0.4]).unwrap();
        let x = PhasePoint::zero_section(path, 4, 0.75).unwrap();
        assert_eq!(classify_critical(&x, &spec, 1e-8).unwrap(), Classification::Constant);
    }

    #[test]
    fn not_critical_is_rejected() {
        let spec = HamiltonianSpec::default_scenario(0.3);
        let x = straight_orbit(&torus(), &[1, 0], &[0.0; 2], &[0.5, 0.0], 4, 0.75).unwrap();
        assert!(matches!(classify_critical(&x, &spec, 1e-8), Err(Error::NotCritical { .. })));
    }

    #[test]
    fn leaf_orbit_classified_on_hypersurface() {
        // r·χ'(σ) = ρ*e^σ solved for r at a chosen σ; then p = ρ ŵ is critical.
        let base = HamiltonianSpec::default_scenario(1.0);
        let sigma: f64 = 0.03;
        let rho = base.rho_star * sigma.exp();
        let r = rho / base.chi(sigma).d1;
        let spec = base.with_r(r);
        let x = straight_orbit(&torus(), &[1, 0], &[0.3, 0.1], &[rho, 0.0], 4, 0.75).unwrap();
        assert!(gradient(&x, &spec).unwrap().norm < 1e-10);
        match classify_critical(&x, &spec, 1e-8).unwrap() {
            Classification::OnHypersurface { sigma: got } => assert!((got - sigma).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rescaling_closes_orbit() {
        let spec = HamiltonianSpec::default_scenario(1.0);
        let sigma: f64 = 0.02;
        let rho = spec.rho_star * sigma.exp();
        let speed = spec.profile(rho).d1;
        // winding (1,0) needs period 1/speed
        let orbit = PeriodicOrbit {
            q0: vec![0.0, 0.0],
            p0: vec![rho, 0.0],
            period: 1.0 / speed,
            winding: vec![1, 0],
        };
        let (x, scaled) = rescale_period(&torus(), &orbit, &spec, 4, 0.75).unwrap();
        assert!((scaled.r - orbit.period * spec.r).abs() < 1e-15);
        assert!(hamilton_residual(&x, &scaled).sup < 1e-10);
        let far = PeriodicOrbit { p0: vec![0.9, 0.0], ..orbit };
        assert!(matches!(rescale_period(&torus(), &far, &spec, 4, 0.75), Err(Error::OutsideThickening(_))));
    }

    #[test]
    fn symplectic_action_of_circle_loop() {
        let circle = ModelManifold::embedded_circle();
        let x = straight_orbit(&circle, &[1], &[0.0], &[1.0], 2, 0.75).unwrap();
        assert!((x.symplectic_action() - TAU).abs() < 1e-12);
    }
}
