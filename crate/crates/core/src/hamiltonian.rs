//! The radial Hamiltonian family `H_r` on the cotangent bundle of a flat model.
//!
//! The separating hypersurface is the sphere bundle `Σ = {|p| = ρ*}` and the
//! thickening is the Liouville flow `Ψ(σ, (q, p)) = (q, e^σ p)`, so every
//! branch of `H_r` depends on `|p|` alone:
//!
//! ```text
//! h_r(ρ) = 0               ρ ≤ ρ* e^{−δ}
//!        = r·χ(ln(ρ/ρ*))    ρ* e^{−δ} < ρ < ρ* e^{δ}
//!        = r               ρ* e^{δ} ≤ ρ ≤ ρ₁
//!        = φ(ρ) + r        ρ > ρ₁
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ModelManifold;

/// Half-width of the band in which a radius counts as lying on a branch
/// boundary.
pub const TIE_BAND: f64 = 1e-9;
const CUTOFF_SAMPLES: usize = 10_000;

/// Quintic smoothstep `S(x) = 6x⁵ − 15x⁴ + 10x³` clamped to `[0, 1]`, with its
/// first three derivatives.
pub fn smoothstep(x: f64) -> [f64; 4] {
    if x <= 0.0 {
        return [0.0; 4];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let x2 = x * x;
    [
        x2 * x * (10.0 + x * (-15.0 + 6.0 * x)),
        30.0 * x2 * (x - 1.0) * (x - 1.0),
        60.0 * x * (2.0 * x2 - 3.0 * x + 1.0),
        360.0 * x2 - 360.0 * x + 60.0,
    ]
}

/// Value and first two derivatives of a radial profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Profile {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Branch {
    /// Bounded component containing the zero section.
    Bounded,
    /// The leaf `Σ_σ` of the thickening.
    Thickening { sigma: f64 },
    /// Unbounded side with `|p| ≤ ρ₁`.
    Plateau,
    /// `ρ₁ < |p| < 2ρ₁`, where fake geodesics live.
    Transition,
    /// `|p| ≥ 2ρ₁`, kinetic Hamiltonian `½|p|² + r`.
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub rho0: f64,
    pub rho1: f64,
    pub rho_star: f64,
    pub delta: f64,
    pub r: f64,
}

impl HamiltonianSpec {
    pub fn new(rho0: f64, rho1: f64, rho_star: f64, delta: f64, r: f64) -> Result<Self> {
        let spec = HamiltonianSpec {
            rho0,
            rho1,
            rho_star,
            delta,
            r,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The default scenario on `T*T²`.
    pub fn default_scenario(r: f64) -> Self {
        HamiltonianSpec::new(0.2, 0.4, 0.3, 0.1, r).expect("default scenario is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.rho0, self.rho1, self.rho_star, self.delta, self.r];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("non-finite Hamiltonian parameter".into()));
        }
        if !(self.rho0 > 0.0 && self.rho0 < self.rho1) {
            return Err(Error::Config(format!(
                "need 0 < rho0 < rho1, got rho0 = {}, rho1 = {}",
                self.rho0, self.rho1
            )));
        }
        if !(self.rho_star > self.rho0 && self.rho_star < self.rho1) {
            return Err(Error::Config(format!(
                "rho_star = {} must lie in (rho0, rho1)",
                self.rho_star
            )));
        }
        if !(self.delta > 0.0 && self.delta < self.half_width()) {
            return Err(Error::Config(format!(
                "delta = {} must lie in (0, {})",
                self.delta,
                self.half_width()
            )));
        }
        if self.r <= 0.0 {
            return Err(Error::Config(format!("r = {} must be positive", self.r)));
        }
        self.check_cutoffs()
    }

    pub fn with_r(&self, r: f64) -> Self {
        HamiltonianSpec { r, ..*self }
    }

    /// `a = ln(ρ₁/ρ*) ∧ ln(ρ*/ρ₀)`.
    pub fn half_width(&self) -> f64 {
        (self.rho1 / self.rho_star).ln().min((self.rho_star / self.rho0).ln())
    }

    pub fn inner_radius(&self) -> f64 {
        self.rho_star * (-self.delta).exp()
    }

    pub fn outer_radius(&self) -> f64 {
        self.rho_star * self.delta.exp()
    }

    /// `Ψ(σ, p) = e^σ p`.
    pub fn thicken(&self, sigma: f64, p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x * sigma.exp()).collect()
    }

    /// `σ` with `|p| = ρ* e^σ`, for radii inside the thickening.
    pub fn thickening_coordinate(&self, rho: f64) -> Result<f64> {
        let sigma = (rho / self.rho_star).ln();
        if sigma.abs() < self.half_width() {
            Ok(sigma)
        } else {
            Err(Error::OutsideThickening(format!(
                "|p| = {rho} gives sigma = {sigma}, outside (-{a}, {a})",
                a = self.half_width()
            )))
        }
    }

    pub fn chi(&self, sigma: f64) -> Profile {
        let w = 2.0 * self.delta;
        let [s, s1, s2, _] = smoothstep((sigma + self.delta) / w);
        Profile {
            value: s,
            d1: s1 / w,
            d2: s2 / (w * w),
        }
    }

    /// `φ(ρ) = ½ρ² g(x)` with `g = S(2 − S)`, `x = (ρ − ρ₁)/ρ₁`.
    pub fn phi(&self, rho: f64) -> Profile {
        let [p, p1, p2, _] = self.phi3(rho);
        Profile {
            value: p,
            d1: p1,
            d2: p2,
        }
    }

    /// `φ` and its first three derivatives.
    pub fn phi3(&self, rho: f64) -> [f64; 4] {
        let l = self.rho1;
        let [s, s1, s2, s3] = smoothstep((rho - l) / l);
        let g = s * (2.0 - s);
        let g1 = 2.0 * (1.0 - s) * s1 / l;
        let g2 = (2.0 * (1.0 - s) * s2 - 2.0 * s1 * s1) / (l * l);
        let g3 = (2.0 * (1.0 - s) * s3 - 6.0 * s1 * s2) / (l * l * l);
        let h = 0.5 * rho * rho;
        [
            h * g,
            rho * g + h * g1,
            g + 2.0 * rho * g1 + h * g2,
            3.0 * g1 + 3.0 * rho * g2 + h * g3,
        ]
    }

    /// The radial profile `h_r(ρ)` with `H_r(q, p) = h_r(|p|)`.
    pub fn profile(&self, rho: f64) -> Profile {
        let r = self.r;
        if rho <= self.inner_radius() {
            Profile {
                value: 0.0,
                d1: 0.0,
                d2: 0.0,
            }
        } else if rho < self.outer_radius() {
            let c = self.chi((rho / self.rho_star).ln());
            Profile {
                value: r * c.value,
                d1: r * c.d1 / rho,
                d2: r * (c.d2 - c.d1) / (rho * rho),
            }
        } else if rho <= self.rho1 {
            Profile {
                value: r,
                d1: 0.0,
                d2: 0.0,
            }
        } else {
            let p = self.phi(rho);
            Profile {
                value: p.value + r,
                ..p
            }
        }
    }

    /// `δ_r(ρ) = h_r(ρ) − ½ρ²`.
    pub fn perturbation(&self, rho: f64) -> f64 {
        self.profile(rho).value - 0.5 * rho * rho
    }

    pub fn branch(&self, rho: f64) -> Branch {
        if rho <= self.inner_radius() {
            Branch::Bounded
        } else if rho < self.outer_radius() {
            Branch::Thickening {
                sigma: (rho / self.rho_star).ln(),
            }
        } else if rho <= self.rho1 {
            Branch::Plateau
        } else if rho < 2.0 * self.rho1 {
            Branch::Transition
        } else {
            Branch::Quadratic
        }
    }

    /// Every branch within [`TIE_BAND`] of `rho`.
    pub fn branches_near(&self, rho: f64) -> Vec<Branch> {
        let mut out: Vec<Branch> = Vec::with_capacity(3);
        for x in [rho - TIE_BAND, rho, rho + TIE_BAND] {
            let b = self.branch(x.max(0.0));
            let same = out.iter().any(|o| std::mem::discriminant(o) == std::mem::discriminant(&b));
            if !same {
                out.push(b);
            }
        }
        out
    }

    /// Sampled check of the plateau and monotonicity conditions on `χ`, `φ`.
    pub fn check_cutoffs(&self) -> Result<()> {
        let n = CUTOFF_SAMPLES;
        for i in 0..=n {
            let sigma = -1.0 + 2.0 * i as f64 / n as f64;
            let c = self.chi(sigma);
            let ok = if sigma <= -self.delta {
                c.value == 0.0
            } else if sigma >= self.delta {
                c.value == 1.0
            } else {
                c.d1 > 0.0
            };
            if !ok {
                return Err(Error::Config(format!("chi violates its shape at sigma = {sigma}")));
            }
        }
        let top = 3.0 * self.rho1;
        for i in 0..=n {
            let rho = top * i as f64 / n as f64;
            let p = self.phi(rho);
            let ok = if rho <= self.rho1 {
                p.value == 0.0
            } else if rho >= 2.0 * self.rho1 {
                (p.value - 0.5 * rho * rho).abs() <= 1e-15 * rho * rho
            } else {
                p.d1 > 0.0
            };
            if !ok {
                return Err(Error::Config(format!("phi violates its shape at rho = {rho}")));
            }
        }
        Ok(())
    }
}

/// `H_r(q, p)`; only non-finite points are unclassifiable.
pub fn evaluate_h(spec: &HamiltonianSpec, q: &[f64], p: &[f64]) -> Result<f64> {
    if q.iter().chain(p).any(|x| !x.is_finite()) {
        return Err(Error::Unclassifiable("non-finite phase point".into()));
    }
    Ok(spec.profile(norm(p)).value)
}

/// `∂_p H = h'(|p|) p/|p|`.
pub fn dh_dp(spec: &HamiltonianSpec, p: &[f64]) -> Vec<f64> {
    let rho = norm(p);
    if rho == 0.0 {
        return vec![0.0; p.len()];
    }
    let d1 = spec.profile(rho).d1;
    p.iter().map(|x| d1 * x / rho).collect()
}

pub(crate) fn norm(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `X_H = (∂_p H, −∂_q H)` in the flat coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseVelocity {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

pub fn hamiltonian_vector_field(
    manifold: &ModelManifold,
    spec: &HamiltonianSpec,
    q: &[f64],
    p: &[f64],
) -> PhaseVelocity {
    let qdot = dh_dp(spec, p);
    // ∇_{q̇} p = −∂_q H = 0; the Christoffel term turns it into ṗ.
    let pdot: Vec<f64> = manifold
        .christoffel(q, &qdot, p)
        .into_iter()
        .map(|g| -g)
        .collect();
    PhaseVelocity { q: qdot, p: pdot }
}

/// Classical RK4 integration of `X_H`, returning the states at each step.
pub fn integrate_hamiltonian(
    manifold: &ModelManifold,
    spec: &HamiltonianSpec,
    q0: &[f64],
    p0: &[f64],
    duration: f64,
    steps: usize,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let h = duration / steps.max(1) as f64;
    let mut q = q0.to_vec();
    let mut p = p0.to_vec();
    let mut out = vec![(q.clone(), p.clone())];
    let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> {
        x.iter().zip(y).map(|(x, y)| x + a * y).collect()
    };
    for _ in 0..steps.max(1) {
        let k1 = hamiltonian_vector_field(manifold, spec, &q, &p);
        let k2 = hamiltonian_vector_field(manifold, spec, &axpy(&q, h / 2.0, &k1.q), &axpy(&p, h / 2.0, &k1.p));
        let k3 = hamiltonian_vector_field(manifold, spec, &axpy(&q, h / 2.0, &k2.q), &axpy(&p, h / 2.0, &k2.p));
        let k4 = hamiltonian_vector_field(manifold, spec, &axpy(&q, h, &k3.q), &axpy(&p, h, &k3.p));
        for i in 0..q.len() {
            q[i] += h / 6.0 * (k1.q[i] + 2.0 * k2.q[i] + 2.0 * k3.q[i] + k4.q[i]);
            p[i] += h / 6.0 * (k1.p[i] + 2.0 * k2.p[i] + 2.0 * k3.p[i] + k4.p[i]);
        }
        out.push((q.clone(), p.clone()));
    }
    out
}

/// Action `φ'(p0)·p0 − φ(p0) − r` of a fake closed geodesic with `|p(0)| = p0`.
pub fn fake_geodesic_action(spec: &HamiltonianSpec, p0: f64) -> Result<f64> {
    if !(p0 > spec.rho1) {
        return Err(Error::NotFakeRegion { p0, rho1: spec.rho1 });
    }
    let p = spec.phi(p0);
    Ok(p.d1 * p0 - p.value - spec.r)
}

/// `r₀ = 1 + max_{ρ ≤ 2ρ₁} |φ'(ρ)ρ − φ(ρ)|` by grid search plus one Newton step.
pub fn r0_threshold(spec: &HamiltonianSpec) -> f64 {
    r0_of_profile(|rho| spec.phi3(rho), spec.rho1)
}

/// Threshold for an arbitrary profile given as `ρ ↦ [φ, φ', φ'', φ''']`.
pub fn r0_of_profile(phi: impl Fn(f64) -> [f64; 4], rho1: f64) -> f64 {
    let top = 2.0 * rho1;
    let f = |rho: f64| {
        let p = phi(rho);
        p[1] * rho - p[0]
    };
    let n = CUTOFF_SAMPLES;
    let mut best = (0.0, 0.0);
    for i in 0..=n {
        let rho = top * i as f64 / n as f64;
        let v = f(rho).abs();
        if v > best.1 {
            best = (rho, v);
        }
    }
    // (φ'ρ − φ)' = φ''ρ and (φ'ρ − φ)'' = φ'''ρ + φ''.
    let (rho, _) = best;
    let p = phi(rho);
    let (g1, g2) = (p[2] * rho, p[3] * rho + p[2]);
    if g2 != 0.0 {
        let cand = rho - g1 / g2;
        if cand > 0.0 && cand <= top && f(cand).abs() > best.1 {
            best = (cand, f(cand).abs());
        }
    }
    1.0 + best.1
}

/// `β = sup_ρ (½ρ² − φ(ρ))`; the supremum is attained on `[0, 2ρ₁]`.
pub fn beta(spec: &HamiltonianSpec) -> f64 {
    let top = 2.0 * spec.rho1;
    let n = 100_000;
    (0..=n)
        .map(|i| {
            let rho = top * i as f64 / n as f64;
            0.5 * rho * rho - spec.phi(rho).value
        })
        .fold(0.0, f64::max)
}

/// `α = sup_{0 ≤ ρ ≤ cap} (cρ − ½ρ²) + β`, an upper bound for the action on
/// the fiber over loops with `‖q̇‖ ≤ c` and `‖p‖ ≤ cap`.
pub fn alpha(spec: &HamiltonianSpec, speed: f64, cap: Option<f64>) -> f64 {
    let rho = cap.map_or(speed, |c| speed.min(c)).max(0.0);
    speed * rho - 0.5 * rho * rho + beta(spec)
}

/// `sup_ρ |δ_{a}(ρ) − δ_{b}(ρ)|` over a dense radial grid; beyond the largest
/// `2ρ₁` the difference is constant.
pub fn perturbation_gap(a: &HamiltonianSpec, b: &HamiltonianSpec) -> f64 {
    let top = 2.5 * a.rho1.max(b.rho1);
    let n = 20_000;
    (0..=n)
        .map(|i| {
            let rho = top * i as f64 / n as f64;
            (a.perturbation(rho) - b.perturbation(rho)).abs()
        })
        .fold(0.0, f64::max)
}
