//! The truncated normalized negative gradient flow
//! `V_r = −φ(‖p‖_{1−s})·grad 𝔸_r / √(1 + ‖grad 𝔸_r‖²)` and the diagnostics
//! recorded along it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::action::{check_s, ActionModel, PhasePoint};
use crate::error::{Error, Result};
use crate::hamiltonian::{smoothstep, HamiltonianSpec};
use crate::spectral::{eigendecompose, weighted_dot, FiberField};

/// Tolerated action increase per accepted step.
pub const STEP_TOLERANCE: f64 = 1e-8;
const MIN_DT: f64 = 1e-10;
/// Relative increase over the last quarter of a record that counts as growth.
pub const LATE_GROWTH: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub s: f64,
    pub modes: usize,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub gamma_dprime: f64,
    pub epsilon: f64,
    pub t0: f64,
    pub dt: f64,
    pub grad_tol: f64,
    pub t_max: f64,
    /// Consecutive steps below `grad_tol` that accept a critical point.
    #[serde(default = "default_accept_steps")]
    pub accept_steps: usize,
    #[serde(default = "default_true")]
    pub use_cutoff: bool,
    /// Multi-start seeds for the inner supremum over the fiber.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_accept_steps() -> usize {
    10
}

fn default_true() -> bool {
    true
}

fn default_starts() -> usize {
    8
}

impl FlowConfig {
    /// Radii derived from `α`: `γ' = γ + α/ε² + 1`, `γ'' = γ' + 2`.
    pub fn derived(alpha: f64, gamma: f64, epsilon: f64) -> Self {
        let gamma_prime = gamma + alpha / (epsilon * epsilon) + 1.0;
        FlowConfig {
            s: 0.75,
            modes: 32,
            gamma,
            gamma_prime,
            gamma_dprime: gamma_prime + 2.0,
            epsilon,
            t0: 5.0,
            dt: 1e-2,
            grad_tol: 1e-6,
            t_max: 50.0,
            accept_steps: default_accept_steps(),
            use_cutoff: true,
            starts: default_starts(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_s(self.s).map_err(|e| Error::Config(e.to_string()))?;
        let bad = |m: String| Err(Error::Config(m));
        if self.modes == 0 {
            return bad("modes must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma < self.gamma_prime) {
            return bad(format!("need 0 < gamma < gamma_prime, got {} and {}", self.gamma, self.gamma_prime));
        }
        if !(self.gamma_dprime > self.gamma_prime + 1.0) {
            return bad(format!("gamma_dprime = {} must exceed gamma_prime + 1", self.gamma_dprime));
        }
        if !(self.epsilon > 0.0 && self.dt > 0.0 && self.grad_tol > 0.0) {
            return bad("epsilon, dt and grad_tol must be positive".into());
        }
        if !(self.t0 > 0.0 && self.t0 <= self.t_max) {
            return bad(format!("need 0 < t0 <= t_max, got {} and {}", self.t0, self.t_max));
        }
        if self.starts == 0 || self.accept_steps == 0 {
            return bad("starts and accept_steps must be positive".into());
        }
        Ok(())
    }

    /// `φ` with `φ ≡ 1` on `[0, γ'+1]` and `φ ≡ 0` on `[γ'', ∞)`.
    pub fn cutoff(&self, fiber_norm: f64) -> f64 {
        if !self.use_cutoff {
            return 1.0;
        }
        let start = self.gamma_prime + 1.0;
        1.0 - smoothstep((fiber_norm - start) / (self.gamma_dprime - start))[0]
    }
}

/// Vector field `V_r` on frame coordinates.
struct FlowField<'a> {
    model: &'a ActionModel,
    config: &'a FlowConfig,
}

struct FieldValue {
    dq: Vec<f64>,
    dp: Vec<f64>,
    phi_tilde: f64,
    grad_norm: f64,
}

impl FlowField<'_> {
    fn eval(&self, q: &[f64], p: &[f64]) -> FieldValue {
        let s = self.model.s();
        let w = self.model.frame().weights(1.0 - s);
        let pn = weighted_dot(&w, p, p).sqrt();
        let cut = self.config.cutoff(pn);
        let g = self.model.gradient(q, p);
        let phi_tilde = cut / (1.0 + g.norm * g.norm).sqrt();
        FieldValue {
            dq: g.horizontal.iter().map(|x| -phi_tilde * x).collect(),
            dp: g.vertical.iter().map(|x| -phi_tilde * x).collect(),
            phi_tilde,
            grad_norm: g.norm,
        }
    }

    fn rk4(&self, q: &[f64], p: &[f64], h: f64, k1: &FieldValue) -> (Vec<f64>, Vec<f64>) {
        let axpy = |x: &[f64], a: f64, y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(x, y)| x + a * y).collect()
        };
        let k2 = self.eval(&axpy(q, h / 2.0, &k1.dq), &axpy(p, h / 2.0, &k1.dp));
        let k3 = self.eval(&axpy(q, h / 2.0, &k2.dq), &axpy(p, h / 2.0, &k2.dp));
        let k4 = self.eval(&axpy(q, h, &k3.dq), &axpy(p, h, &k3.dp));
        let comb = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
            (0..x.len())
                .map(|i| x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                .collect()
        };
        (
            comb(q, &k1.dq, &k2.dq, &k3.dq, &k4.dq),
            comb(p, &k1.dp, &k2.dp, &k3.dp, &k4.dp),
        )
    }
}

/// Result of one accepted integrator step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: PhasePoint,
    pub dt: f64,
    pub action_before: f64,
    pub action_after: f64,
    pub grad_norm: f64,
    pub phi_tilde: f64,
}

struct RawStep {
    q: Vec<f64>,
    p: Vec<f64>,
    dt: f64,
    action: f64,
    rejections: usize,
}

fn raw_step(field: &FlowField, q: &[f64], p: &[f64], a0: f64, k1: &FieldValue, dt: f64) -> Result<RawStep> {
    let mut h = dt;
    let mut rejections = 0;
    loop {
        let (nq, np) = field.rk4(q, p, h, k1);
        let a1 = field.model.action(&nq, &np);
        if a1.is_finite() && a1 <= a0 + STEP_TOLERANCE {
            return Ok(RawStep {
                q: nq,
                p: np,
                dt: h,
                action: a1,
                rejections,
            });
        }
        rejections += 1;
        h *= 0.5;
        if h < MIN_DT {
            return Err(Error::StepRejected { dt: h });
        }
    }
}

/// Recompute the frame along the new loop and re-expand `p` in it.
fn refresh(x: &PhasePoint, config: &FlowConfig) -> Result<PhasePoint> {
    let frame = eigendecompose(x.path(), config.modes)?;
    if Arc::ptr_eq(&frame, x.frame()) {
        return Ok(x.clone());
    }
    let fiber = FiberField::from_samples(frame, &x.fiber().samples())?;
    PhasePoint::new(x.path().clone(), fiber, x.s())
}

fn rebuild(x: &PhasePoint, q: Vec<f64>, p: Vec<f64>, config: &FlowConfig) -> Result<PhasePoint> {
    let y = PhasePoint::from_coeffs(
        x.path().manifold(),
        x.frame().clone(),
        x.path().winding(),
        q,
        p,
        x.s(),
    )?;
    refresh(&y, config)
}

/// One RK4 step of `V_r`, halving `dt` while the action rises by more than
/// [`STEP_TOLERANCE`].
pub fn flow_step(x: &PhasePoint, spec: &HamiltonianSpec, config: &FlowConfig) -> Result<StepOutcome> {
    let model = ActionModel::for_point(x, spec);
    let field = FlowField { model: &model, config };
    let (q, p) = (x.q_coeffs(), x.p_coeffs());
    let a0 = model.action(q, p);
    let k1 = field.eval(q, p);
    let step = raw_step(&field, q, p, a0, &k1, config.dt)?;
    Ok(StepOutcome {
        state: rebuild(x, step.q, step.p, config)?,
        dt: step.dt,
        action_before: a0,
        action_after: step.action,
        grad_norm: k1.grad_norm,
        phi_tilde: k1.phi_tilde,
    })
}

#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub actions: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    /// `φ̃ = φ/√(1 + ‖grad‖²)` at each recorded state.
    pub phi_tilde: Vec<f64>,
    /// `(a(t), b(t))` at each recorded time.
    pub ab: Vec<(f64, f64)>,
    /// Accepted as critical: gradient below `grad_tol` for `accept_steps` steps.
    pub converged: bool,
    /// Step budget exhausted before the horizon.
    pub partial: bool,
    pub rejected_steps: usize,
}

impl FlowTrajectory {
    pub fn last(&self) -> &PhasePoint {
        self.states.last().expect("trajectory holds its initial state")
    }

    pub fn final_action(&self) -> f64 {
        *self.actions.last().expect("trajectory holds its initial state")
    }

    /// Largest action increase between consecutive states.
    pub fn max_action_increase(&self) -> f64 {
        self.actions.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

fn ab_from_integral(i: f64) -> (f64, f64) {
    let (em, ep) = ((-i).exp(), i.exp());
    (0.5 * (em - ep), 0.5 * (em + ep))
}

/// Integrate `V_r` from `x0` up to time `horizon`, stopping early once a
/// critical point is accepted.
pub fn flow(x0: &PhasePoint, spec: &HamiltonianSpec, config: &FlowConfig, horizon: f64) -> Result<FlowTrajectory> {
    config.validate()?;
    if !(horizon >= 0.0 && horizon <= config.t_max) {
        return Err(Error::Invalid(format!(
            "horizon {horizon} outside [0, t_max = {}]",
            config.t_max
        )));
    }
    let x0 = refresh(x0, config)?;
    let model = ActionModel::for_point(&x0, spec);
    let field = FlowField { model: &model, config };
    let mut q = x0.q_coeffs().to_vec();
    let mut p = x0.p_coeffs().to_vec();
    let mut a = model.action(&q, &p);
    let mut k1 = field.eval(&q, &p);

    let mut traj = FlowTrajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        actions: vec![a],
        gradient_norms: vec![k1.grad_norm],
        phi_tilde: vec![k1.phi_tilde],
        ab: vec![(0.0, 1.0)],
        converged: false,
        partial: false,
        rejected_steps: 0,
    };
    let budget = 64 * ((horizon / config.dt).ceil() as usize + 1);
    let mut t = 0.0;
    let mut integral = 0.0;
    let mut below = usize::from(k1.grad_norm < config.grad_tol);
    let mut steps = 0;
    while t < horizon - 1e-12 {
        if below >= config.accept_steps {
            traj.converged = true;
            break;
        }
        if steps >= budget {
            traj.partial = true;
            break;
        }
        steps += 1;
        let dt = config.dt.min(horizon - t);
        let step = raw_step(&field, &q, &p, a, &k1, dt)?;
        traj.rejected_steps += step.rejections;
        let phi_prev = k1.phi_tilde;
        q = step.q;
        p = step.p;
        a = step.action;
        t += step.dt;
        k1 = field.eval(&q, &p);
        integral += 0.5 * step.dt * (phi_prev + k1.phi_tilde);
        below = if k1.grad_norm < config.grad_tol { below + 1 } else { 0 };
        let state = rebuild(&x0, q.clone(), p.clone(), config)?;
        traj.times.push(t);
        traj.states.push(state);
        traj.actions.push(a);
        traj.gradient_norms.push(k1.grad_norm);
        traj.phi_tilde.push(k1.phi_tilde);
        traj.ab.push(ab_from_integral(integral));
    }
    if below >= config.accept_steps {
        traj.converged = true;
    }
    Ok(traj)
}

/// `(a, b)` and the residual `K` of `p(t) = a·ȷ*_{1−s} q̇(0) + b·p(0) + K`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepresentationSample {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    /// `(b − a)(b + a) − 1`.
    pub identity_defect: f64,
    /// `‖K‖_{1−s}`.
    pub k_residual: f64,
    /// Frame coefficients of `K`.
    #[serde(skip)]
    pub k: Vec<f64>,
}

/// Representation coefficients along a recorded trajectory. Parallel
/// transport is the identity on the flat models.
pub fn representation_coefficients(traj: &FlowTrajectory) -> Result<Vec<RepresentationSample>> {
    let x0 = &traj.states[0];
    let s = x0.s();
    let frame0 = x0.frame().clone();
    let jq = {
        let w = frame0.weights(s - 1.0);
        x0.velocity_coeffs().iter().zip(w).map(|(v, w)| v * w).collect::<Vec<_>>()
    };
    let p0 = x0.p_coeffs().to_vec();
    traj.states
        .iter()
        .zip(&traj.times)
        .zip(&traj.ab)
        .map(|((x, &t), &(a, b))| {
            let p = if Arc::ptr_eq(x.frame(), &frame0) {
                x.p_coeffs().to_vec()
            } else {
                frame0.expand(&x.fiber().samples())?
            };
            let k: Vec<f64> = (0..p.len()).map(|j| p[j] - a * jq[j] - b * p0[j]).collect();
            let k_residual = weighted_dot(&frame0.weights(1.0 - s), &k, &k).sqrt();
            Ok(RepresentationSample {
                t,
                a,
                b,
                identity_defect: (b - a) * (b + a) - 1.0,
                k_residual,
                k,
            })
        })
        .collect()
}

/// `max_{K ∈ family} ‖K − (projection onto the first m eigenfields)‖_{1−s}`
/// for every frame index `m`, a Kolmogorov-width proxy.
pub fn tail_width_profile(frame: &crate::spectral::SpectralFrame, s: f64, family: &[Vec<f64>]) -> Vec<f64> {
    let w = frame.weights(1.0 - s);
    (0..=frame.len())
        .map(|m| {
            family
                .iter()
                .map(|k| (m..k.len()).map(|j| w[j] * k[j] * k[j]).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Per-state quantities of the Palais–Smale argument.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsRow {
    pub t: f64,
    /// `‖ȷ*_{1−s}(q̇ − p)‖_{1−s} = ‖q̇ − p‖_{s−1}`.
    pub step1: f64,
    /// `‖p‖² / (1 + ‖p‖_{1−s})`.
    pub step2_ratio: f64,
    /// `‖∇_{q̇} p‖_{−s}`.
    pub step3: f64,
    /// `‖p^par‖`, the kernel component.
    pub par_norm: f64,
    /// `‖p̃‖_{1−s}`, the complement.
    pub tilde_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PsReport {
    pub rows: Vec<PsRow>,
    /// Names of quantities showing unbounded growth.
    pub flags: Vec<String>,
}

impl PsReport {
    pub fn diverged(&self) -> bool {
        !self.flags.is_empty()
    }
}

pub fn ps_row(x: &PhasePoint, t: f64) -> PsRow {
    let frame = x.frame();
    let s = x.s();
    let p = x.p_coeffs();
    let v = x.velocity_coeffs();
    let diff: Vec<f64> = v.iter().zip(p).map(|(a, b)| a - b).collect();
    let dp = x.fiber().covariant_derivative();
    let lam = frame.eigenvalues();
    let par: f64 = p.iter().zip(lam).filter(|(_, &l)| l == 0.0).map(|(c, _)| c * c).sum();
    let tilde: Vec<f64> = p.iter().zip(lam).map(|(c, &l)| if l == 0.0 { 0.0 } else { *c }).collect();
    let pn = x.fiber_norm();
    PsRow {
        t,
        step1: weighted_dot(&frame.weights(s - 1.0), &diff, &diff).sqrt(),
        step2_ratio: x.fiber().l2_norm().powi(2) / (1.0 + pn),
        step3: dp.norm(-s),
        par_norm: par.sqrt(),
        tilde_norm: weighted_dot(&frame.weights(1.0 - s), &tilde, &tilde).sqrt(),
    }
}

/// Flag a quantity whose final value is at least `2·(initial + 1)`, which
/// increases strictly over the second half of the record and still gains at
/// least [`LATE_GROWTH`] of its final value over the last quarter. The last
/// test separates unbounded growth from creep toward the cutoff shell.
fn grows(series: &[f64]) -> bool {
    let (Some(&first), Some(&last)) = (series.first(), series.last()) else {
        return false;
    };
    if !last.is_finite() {
        return true;
    }
    let half = &series[series.len() / 2..];
    let late = series[3 * (series.len() - 1) / 4];
    last >= 2.0 * (first + 1.0) && half.windows(2).all(|w| w[1] > w[0]) && last - late >= LATE_GROWTH * last
}

pub fn ps_report(rows: Vec<PsRow>) -> PsReport {
    let columns: [(&str, fn(&PsRow) -> f64); 5] = [
        ("step1", |r| r.step1),
        ("step2_ratio", |r| r.step2_ratio),
        ("step3", |r| r.step3),
        ("par_norm", |r| r.par_norm),
        ("tilde_norm", |r| r.tilde_norm),
    ];
    let flags = columns
        .iter()
        .filter(|(_, f)| grows(&rows.iter().map(f).collect::<Vec<_>>()))
        .map(|(name, _)| name.to_string())
        .collect();
    PsReport { rows, flags }
}

/// Step 1–4 quantities at every recorded state of a trajectory.
pub fn ps_diagnostics(traj: &FlowTrajectory) -> PsReport {
    ps_report(
        traj.states
            .iter()
            .zip(&traj.times)
            .map(|(x, &t)| ps_row(x, t))
            .collect(),
    )
}
