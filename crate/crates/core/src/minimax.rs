//! The minimax value `θ(r) = inf_t sup_{φ^t(π⁻¹(C))} 𝔸_r` and the sweep over
//! `r` that looks for critical points on the leaves of the thickening.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::action::{classify_critical, hamilton_residual, ActionModel, Classification, PhasePoint};
use crate::error::{Error, Result};
use crate::flow::{flow, FlowConfig};
use crate::geometry::LoopPath;
use crate::hamiltonian::{alpha, r0_threshold, HamiltonianSpec};
use crate::spectral::{eigendecompose, weighted_dot, FiberField};

/// Fiber scalings of `ȷ*_{1−s} q̇` used as deterministic ascent seeds.
const SEED_SCALES: [f64; 7] = [0.15, 0.25, 0.35, 0.5, 0.75, 1.0, 1.4];
const LBFGS_MEMORY: usize = 8;
const ASCENT_ITERATIONS: usize = 3000;
const DUPLICATE_DISTANCE: f64 = 1e-6;
/// Consecutive ascent iterations without action progress before stopping.
const STALL_ITERATIONS: usize = 10;
/// Longest ascent step in L²; keeps each ascent local to its seed so thin
/// maxima inside the thickening are not jumped over.
const MAX_STEP: f64 = 0.01;

/// Result of a projected L-BFGS ascent of `p ↦ 𝔸(q, p)` on the fiber ball.
#[derive(Clone, Debug)]
pub struct FiberMax {
    pub p: Vec<f64>,
    pub action: f64,
    /// Vertical gradient norm in the `(1−s)` metric.
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximize `𝔸(q, ·)` from `p0` over `{‖p‖_{1−s} ≤ radius}`.
pub fn fiber_ascent(model: &ActionModel, q: &[f64], p0: &[f64], radius: f64, tol: f64) -> FiberMax {
    let wn = model.frame().weights(1.0 - model.s());
    let wv = model.vertical_weights().to_vec();
    let project = |p: &mut Vec<f64>| -> bool {
        let n = weighted_dot(&wn, p, p).sqrt();
        if n > radius {
            p.iter_mut().for_each(|x| *x *= radius / n);
            true
        } else {
            false
        }
    };
    let mut p = p0.to_vec();
    project(&mut p);
    // minimize f = −𝔸 with gradient −g_v
    let eval = |p: &[f64]| -> (f64, Vec<f64>) {
        let g = model.vertical_l2_gradient(q, p);
        (-model.action(q, p), g.iter().map(|x| -x).collect())
    };
    let (mut f, mut g) = eval(&p);
    let mut mem: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let metric_norm = |g: &[f64]| weighted_dot(&wv, g, g).sqrt();
    // at a maximum the line search only trades round-off; accept the
    // relaxed tolerance once the action stops moving
    let relaxed = tol.sqrt() * tol.sqrt().max(1e-3);
    let mut iterations = 0;
    let mut stalled = 0;
    let mut converged = metric_norm(&g) < tol;
    while !converged && iterations < ASCENT_ITERATIONS {
        iterations += 1;
        // two-loop recursion with the metric inverse as initial scaling
        let mut d = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        let gamma = mem.last().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        d.iter_mut().zip(&wv).for_each(|(di, w)| *di *= gamma * w);
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().for_each(|x| *x = -*x);
        let len = dot(&d, &d).sqrt();
        if len > MAX_STEP {
            d.iter_mut().for_each(|x| *x *= MAX_STEP / len);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            mem.clear();
            d = g.iter().zip(&wv).map(|(g, w)| -g * w).collect();
            let len = dot(&d, &d).sqrt();
            if len > MAX_STEP {
                d.iter_mut().for_each(|x| *x *= MAX_STEP / len);
            }
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = p.iter().zip(&d).map(|(x, di)| x + step * di).collect();
            let clipped = project(&mut trial);
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && (ft <= f + 1e-4 * step * slope || (clipped && ft < f)) {
                accepted = Some((trial, ft, gt, clipped));
                break;
            }
            step *= 0.5;
        }
        let Some((np, nf, ng, clipped)) = accepted else {
            converged = metric_norm(&g) < relaxed;
            break;
        };
        let s: Vec<f64> = np.iter().zip(&p).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if clipped {
            mem.clear();
        } else if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if mem.len() == LBFGS_MEMORY {
                mem.remove(0);
            }
            mem.push((s, y, 1.0 / sy));
        }
        let progress = (f - nf).abs();
        p = np;
        f = nf;
        g = ng;
        converged = metric_norm(&g) < tol;
        stalled = if progress < 1e-15 * (1.0 + f.abs()) { stalled + 1 } else { 0 };
        if !converged && stalled >= STALL_ITERATIONS {
            converged = metric_norm(&g) < relaxed;
            break;
        }
    }
    FiberMax {
        action: -f,
        grad_norm: metric_norm(&g),
        p,
        converged,
        iterations,
    }
}

/// Ascent seeds: scalings of `ȷ*_{1−s} q̇` normalized in L², then random
/// band-limited fields.
fn seeds(model: &ActionModel, q: &[f64], starts: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let frame = model.frame();
    let v = model.velocity(q);
    let jq: Vec<f64> = v.iter().zip(model.vertical_weights()).map(|(a, w)| a * w).collect();
    let len = dot(&jq, &jq).sqrt();
    let scaled = SEED_SCALES.len().min(starts.saturating_sub(1)).max(1);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(starts);
    if len > 0.0 {
        for &k in SEED_SCALES.iter().take(scaled) {
            out.push(jq.iter().map(|x| k * x / len).collect());
        }
    }
    let lam = frame.eigenvalues();
    while out.len() < starts {
        let amp = rng.gen_range(0.05..1.2);
        let p: Vec<f64> = lam
            .iter()
            .map(|l| {
                let decay = if *l == 0.0 { 1.0 } else { 0.1 / (1.0 + l).sqrt() };
                amp * decay * rng.gen_range(-1.0..1.0)
            })
            .collect();
        out.push(p);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimaxRecord {
    pub r: f64,
    pub theta: f64,
    pub alpha: f64,
    pub classification: Classification,
    /// `𝔸_r` at the witness (equal to `θ`).
    pub action: f64,
    pub sigma: Option<f64>,
    /// `⟨q̇, p⟩` of the witness when it lies on a leaf.
    pub leaf_action: Option<f64>,
    pub grad_norm: f64,
    pub hamilton_residual: f64,
    /// Flow steps summed over the maximizer family.
    pub steps: usize,
    pub maximizers: usize,
    /// Every ascent and the witness flow converged.
    pub confident: bool,
    #[serde(skip)]
    pub witness: PhasePoint,
}

/// `α` for a family of loops: `c = max ‖q̇‖`, capped by the fiber radius `γ''`.
pub fn family_alpha(family: &[LoopPath], spec: &HamiltonianSpec, config: &FlowConfig) -> Result<f64> {
    let mut speed: f64 = 0.0;
    for path in family {
        let x = PhasePoint::zero_section(path.clone(), config.modes, config.s)?;
        speed = speed.max((2.0 * x.energy()).sqrt());
    }
    Ok(alpha(spec, speed, Some(config.gamma_dprime)))
}

fn theta_once(
    family: &[LoopPath],
    spec: &HamiltonianSpec,
    config: &FlowConfig,
    starts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MinimaxRecord> {
    let tol = (config.grad_tol * 1e-4).min(1e-10);
    let mut candidates: Vec<(PhasePoint, bool)> = Vec::new();
    for path in family {
        let frame = eigendecompose(path, config.modes)?;
        let x0 = PhasePoint::new(path.clone(), FiberField::zeros(frame), config.s)?;
        let model = ActionModel::for_point(&x0, spec);
        for seed in seeds(&model, x0.q_coeffs(), starts, rng) {
            let m = fiber_ascent(&model, x0.q_coeffs(), &seed, config.gamma_dprime, tol);
            let dup = candidates.iter().any(|(c, _)| {
                c.path() == path && {
                    let d: f64 = c.p_coeffs().iter().zip(&m.p).map(|(a, b)| (a - b) * (a - b)).sum();
                    d.sqrt() < DUPLICATE_DISTANCE
                }
            });
            if !dup {
                let fiber = FiberField::new(x0.frame().clone(), m.p)?;
                candidates.push((PhasePoint::new(path.clone(), fiber, config.s)?, m.converged));
            }
        }
    }
    let mut best: Option<(f64, PhasePoint, bool)> = None;
    let mut steps = 0;
    let mut all_converged = true;
    for (x, ascent_ok) in &candidates {
        all_converged &= *ascent_ok;
        let model = ActionModel::for_point(x, spec);
        // A critical maximizer is a fixed point of the flow. Integrating from
        // it would only amplify round-off along its unstable fiber directions.
        let (a, end, ok) = if model.gradient(x.q_coeffs(), x.p_coeffs()).norm < config.grad_tol {
            (model.action(x.q_coeffs(), x.p_coeffs()), x.clone(), *ascent_ok)
        } else {
            let traj = flow(x, spec, config, config.t0)?;
            steps += traj.times.len() - 1;
            (traj.final_action(), traj.last().clone(), *ascent_ok && traj.converged)
        };
        if best.as_ref().is_none_or(|(b, _, _)| a > *b) {
            best = Some((a, end, ok));
        }
    }
    let (theta, witness, witness_ok) = best.ok_or_else(|| Error::Invalid("empty loop family".into()))?;
    let model = ActionModel::for_point(&witness, spec);
    let grad_norm = model.gradient(witness.q_coeffs(), witness.p_coeffs()).norm;
    let classification = match classify_critical(&witness, spec, config.grad_tol) {
        Ok(c) => c,
        Err(Error::NotCritical { norm, .. }) => Classification::Unclassified {
            reason: format!("witness gradient {norm:e} above tolerance"),
        },
        Err(e) => return Err(e),
    };
    let sigma = classification.sigma();
    Ok(MinimaxRecord {
        r: spec.r,
        theta,
        alpha: family_alpha(family, spec, config)?,
        leaf_action: sigma.map(|_| witness.symplectic_action()),
        sigma,
        classification,
        action: theta,
        grad_norm,
        hamilton_residual: hamilton_residual(&witness, spec).l2(),
        steps,
        maximizers: candidates.len(),
        confident: all_converged && witness_ok,
        witness,
    })
}

/// Estimate `θ(r)` for the loop family `C` and return the witness.
///
/// When some ascent fails to converge the multi-start is widened once to
/// twice as many seeds; `confident` reports the outcome.
pub fn minimax_theta(
    family: &[LoopPath],
    spec: &HamiltonianSpec,
    config: &FlowConfig,
    seed: u64,
) -> Result<MinimaxRecord> {
    config.validate()?;
    if family.is_empty() {
        return Err(Error::Invalid("loop family C must be nonempty".into()));
    }
    if family.iter().any(|l| l.manifold().is_simply_connected()) {
        return Err(Error::Invalid("minimax needs a non-simply-connected model".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = theta_once(family, spec, config, config.starts, &mut rng)?;
    if first.confident {
        return Ok(first);
    }
    let wider = theta_once(family, spec, config, 2 * config.starts, &mut rng)?;
    Ok(if wider.theta > first.theta || wider.confident { wider } else { first })
}

/// Leaf `σ` solving `r·χ'(σ) = ρ* e^σ·|q̇|` at its first crossing, where
/// `p ↦ |q̇|·|p| − h_r(|p|)` has its local maximum inside the thickening.
pub fn analytic_leaf(spec: &HamiltonianSpec, speed: f64) -> Option<f64> {
    let g = |sigma: f64| spec.r * spec.chi(sigma).d1 - spec.rho_star * sigma.exp() * speed;
    let n = 20_000;
    let grid: Vec<f64> = (0..=n).map(|i| -spec.delta + 2.0 * spec.delta * i as f64 / n as f64).collect();
    let idx = grid.windows(2).position(|w| g(w[0]) < 0.0 && g(w[1]) >= 0.0)?;
    let (mut a, mut b) = (grid[idx], grid[idx + 1]);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub records: Vec<MinimaxRecord>,
    pub alpha: f64,
    pub r0: f64,
    /// Index of the first on-hypersurface record.
    pub first_hit: Option<usize>,
    /// `2(α + r₀)`, the bound on the leaf action.
    pub leaf_bound: f64,
    /// Spread of `𝔸_r + r` over closed-geodesic records (constant on a plateau).
    pub geodesic_plateau_spread: Option<f64>,
}

impl SweepReport {
    pub fn hits(&self) -> impl Iterator<Item = &MinimaxRecord> {
        self.records.iter().filter(|r| r.sigma.is_some())
    }
}

/// `θ(r)` with witnesses over an `r`-grid on a worker pool of `jobs` threads;
/// records come back in grid order.
pub fn orbit_sweep(
    template: &HamiltonianSpec,
    r_grid: &[f64],
    family: &[LoopPath],
    config: &FlowConfig,
    seed: u64,
    jobs: usize,
) -> Result<SweepReport> {
    if let Some(bad) = r_grid.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::Invalid(format!("r = {bad} must be positive")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let records: Vec<MinimaxRecord> = pool.install(|| {
        r_grid
            .par_iter()
            .enumerate()
            .map(|(i, &r)| {
                let spec = template.with_r(r);
                spec.validate()?;
                minimax_theta(family, &spec, config, seed.wrapping_add(i as u64))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let alpha = if family.is_empty() {
        0.0
    } else {
        family_alpha(family, template, config)?
    };
    let r0 = r0_threshold(template);
    let first_hit = records.iter().position(|r| r.sigma.is_some());
    let plateau: Vec<f64> = records
        .iter()
        .filter(|r| r.classification == Classification::ClosedGeodesic)
        .map(|r| r.action + r.r)
        .collect();
    let geodesic_plateau_spread = (!plateau.is_empty()).then(|| {
        let hi = plateau.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = plateau.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    });
    Ok(SweepReport {
        records,
        alpha,
        r0,
        first_hit,
        leaf_bound: 2.0 * (alpha + r0),
        geodesic_plateau_spread,
    })
}
