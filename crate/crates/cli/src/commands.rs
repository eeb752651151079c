//! The five experiment commands. Each computes everything first, then hands
//! the artifacts to a single [`Writer`].

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use loopspace::flow::{flow, ps_diagnostics, PsReport};
use loopspace::minimax::{orbit_sweep, MinimaxRecord};
use loopspace::spectral::GrowthFit;
use loopspace::{
    eigendecompose, eigendecompose_dense, gradient, inner_r_emb, FiberField, LoopPath, ManifoldKind,
    ModelManifold, PhasePoint, TangentFieldSamples,
};

use crate::config::{RunConfig, RunManifest};
use crate::error::{CliError, CliResult};
use crate::output::{num, opt, table_files, Table, Writer};

/// Result of a command that ran to completion. `failure` carries the reason
/// for a numerical-failure exit after the artifacts were written.
pub struct Outcome {
    pub summary: String,
    pub failure: Option<String>,
}

pub struct Run<'a> {
    pub config: &'a RunConfig,
    pub seed: u64,
    pub jobs: usize,
    pub out: &'a Path,
}

impl Run<'_> {
    fn manifest(&self, command: &str, stems: &[&str], extra: &[&str]) -> CliResult<RunManifest> {
        let mut names: Vec<String> = stems.iter().flat_map(|s| table_files(s)).collect();
        names.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        RunManifest::new(command, self.config, self.seed, &refs)
    }

    fn pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| CliError::Numerical(format!("worker pool: {e}")))
    }
}

#[derive(Serialize)]
struct SpectrumSummary {
    c: f64,
    big_c: f64,
    d: f64,
    max_sup_norm: f64,
    kernel_dim: usize,
    residual: f64,
    orthogonality_defect: f64,
}

pub fn spectrum(run: &Run) -> CliResult<Outcome> {
    let path = run.config.loop_path()?;
    let frame = match run.config.manifold {
        ManifoldKind::EmbeddedCircle => eigendecompose_dense(&path, run.config.modes)?,
        ManifoldKind::FlatTorus { .. } => eigendecompose(&path, run.config.modes)?,
    };
    let sups = frame.sup_norms(8)?;
    let fit = GrowthFit::fit(frame.eigenvalues())?;
    let mut table = Table::new(&["j", "lambda_j", "sup_norm_xi_j"]);
    for (j, (lam, sup)) in frame.eigenvalues().iter().zip(&sups).enumerate() {
        table.push(vec![j.to_string(), num(*lam), num(*sup)]);
    }
    let summary = SpectrumSummary {
        c: fit.c,
        big_c: fit.big_c,
        d: fit.d,
        max_sup_norm: sups.iter().copied().fold(0.0, f64::max),
        kernel_dim: frame.kernel_dim(),
        residual: frame.residual(),
        orthogonality_defect: frame.orthogonality_defect(),
    };
    let manifest = run.manifest("spectrum", &["spectrum"], &["frame.json", "spectrum_summary.json"])?;
    let digest = manifest.digest();
    let mut w = Writer::new(run.out);
    w.table("spectrum", &table, &digest)?;
    w.raw("frame.json", frame.to_json()? + "\n");
    w.json("spectrum_summary.json", &summary);
    w.raw("manifest.json", manifest.to_json() + "\n");
    w.finish()?;
    let failure = (!fit.holds(frame.eigenvalues())).then(|| "fitted growth bounds do not hold".to_string());
    Ok(Outcome {
        summary: format!(
            "{} eigenvalues, kernel dim {}, c = {:.4}, C = {:.4}, d = {:.4}, max sup norm {:.9}",
            frame.len(),
            summary.kernel_dim,
            fit.c,
            fit.big_c,
            fit.d,
            summary.max_sup_norm
        ),
        failure,
    })
}

/// Tolerance on the closed-form ratio `(1 + (2πn)²)^r`.
const RATIO_TOL: f64 = 1e-8;

pub fn metrics_compare(run: &Run) -> CliResult<Outcome> {
    let circle = ModelManifold::embedded_circle();
    let [lo, hi] = run.config.n_range;
    let mut table = Table::new(&["n", "r", "norm_r", "norm_r_emb", "ratio"]);
    let mut worst: f64 = 0.0;
    for n in lo..=hi {
        let path = LoopPath::straight(circle.clone(), vec![n as i64], vec![0.0])?;
        let frame = eigendecompose(&path, run.config.modes)?;
        let p = TangentFieldSamples::from_fn(1, frame.coarse_nodes(), |_| vec![1.0]);
        let fiber = FiberField::from_samples(frame.clone(), &p)?;
        for &r in &run.config.r_list {
            let intrinsic = fiber.norm(r);
            let emb = inner_r_emb(&path, r, &p, &p)?;
            let ratio = emb / (intrinsic * intrinsic);
            worst = worst.max((ratio - (1.0 + (TAU * n as f64).powi(2)).powf(r)).abs());
            table.push(vec![n.to_string(), num(r), num(intrinsic), num(emb), num(ratio)]);
        }
    }
    let manifest = run.manifest("metrics-compare", &["metrics"], &[])?;
    let digest = manifest.digest();
    let mut w = Writer::new(run.out);
    w.table("metrics", &table, &digest)?;
    w.raw("manifest.json", manifest.to_json() + "\n");
    w.finish()?;
    Ok(Outcome {
        summary: format!("{} rows, max deviation from closed form {worst:.3e}", table.rows.len()),
        failure: (worst > RATIO_TOL).then(|| format!("ratio deviates from closed form by {worst:e}")),
    })
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    alpha: f64,
    r0: f64,
    leaf_bound: f64,
    first_hit: Option<&'a MinimaxRecord>,
    geodesic_plateau_spread: Option<f64>,
    all_confident: bool,
    records: &'a [MinimaxRecord],
}

pub fn orbit_sweep_cmd(run: &Run) -> CliResult<Outcome> {
    if !matches!(run.config.manifold, ManifoldKind::FlatTorus { .. }) {
        return Err(CliError::Usage("orbit-sweep needs a flat torus model".into()));
    }
    let family = [run.config.loop_path()?];
    let cfg = run.config.flow_config()?;
    let spec = run.config.hamiltonian()?;
    let report = orbit_sweep(&spec, &run.config.r_grid, &family, &cfg, run.seed, run.jobs)?;
    let mut table = Table::new(&[
        "r",
        "theta",
        "classification",
        "action",
        "sigma",
        "leaf_action",
        "grad_norm",
        "steps",
    ]);
    for rec in &report.records {
        table.push(vec![
            num(rec.r),
            num(rec.theta),
            rec.classification.label().to_string(),
            num(rec.action),
            opt(rec.sigma),
            opt(rec.leaf_action),
            num(rec.grad_norm),
            rec.steps.to_string(),
        ]);
    }
    let summary = SweepSummary {
        alpha: report.alpha,
        r0: report.r0,
        leaf_bound: report.leaf_bound,
        first_hit: report.first_hit.map(|i| &report.records[i]),
        geodesic_plateau_spread: report.geodesic_plateau_spread,
        all_confident: report.records.iter().all(|r| r.confident),
        records: &report.records,
    };
    let manifest = run.manifest("orbit-sweep", &["sweep"], &["sweep_summary.json"])?;
    let digest = manifest.digest();
    let mut w = Writer::new(run.out);
    w.table("sweep", &table, &digest)?;
    w.json("sweep_summary.json", &summary);
    w.raw("manifest.json", manifest.to_json() + "\n");
    w.finish()?;
    let hit = match summary.first_hit {
        Some(h) => format!("first leaf hit at r = {} with action {}", h.r, opt(h.leaf_action)),
        None => "no leaf hit".to_string(),
    };
    Ok(Outcome {
        summary: format!("{} records, alpha = {:.6}, {hit}", report.records.len(), report.alpha),
        failure: None,
    })
}

/// Phase point over a random perturbation of the configured loop with
/// `|p|` spread across every branch of the Hamiltonian.
fn random_point(rng: &mut ChaCha8Rng, config: &RunConfig) -> CliResult<PhasePoint> {
    let base = config.loop_path()?;
    let n = base.dim();
    let extra = rng.gen_range(0..=4usize);
    let mut coeff = |m: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-0.05..0.05) / ((m + 1) * (m + 1)) as f64).collect()
    };
    let (cos, sin): (Vec<_>, Vec<_>) = (0..extra).map(|m| (coeff(m), coeff(m))).unzip();
    let shifted: Vec<f64> = base.base().iter().map(|b| b + rng.gen_range(0.0..0.1)).collect();
    let path = LoopPath::new(base.manifold().clone(), base.winding().to_vec(), shifted, cos, sin)?;
    let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let mean = rng.gen_range(0.0..1.6) / len;
    let wobble: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(-0.03..0.03), rng.gen_range(0.0..TAU))).collect();
    let nodes = 2 * config.modes + 1;
    let p = TangentFieldSamples::from_fn(n, nodes, |t| {
        (0..n)
            .map(|k| mean * dir[k] + wobble[k].0 * (TAU * t + wobble[k].1).cos())
            .collect()
    });
    Ok(PhasePoint::from_samples(path, &p, config.modes, config.s)?)
}

#[derive(Serialize)]
struct TrajectorySummary {
    trajectory: usize,
    start: &'static str,
    converged: bool,
    partial: bool,
    final_action: f64,
    final_step1: f64,
    flags: Vec<String>,
}

pub fn ps_diagnose(run: &Run) -> CliResult<Outcome> {
    let spec = run.config.hamiltonian()?;
    let cfg = run.config.flow_config()?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut starts = Vec::new();
    for _ in 0..run.config.ps_seeds {
        starts.push(("random", random_point(&mut rng, run.config)?));
    }
    if let Some(p) = &run.config.ps_momentum {
        let path = run.config.loop_path()?;
        let samples = TangentFieldSamples::from_fn(p.len(), 2 * run.config.modes + 1, |_| p.clone());
        starts.push(("fixed", PhasePoint::from_samples(path, &samples, run.config.modes, run.config.s)?));
    }
    let horizon = run.config.ps_horizon;
    let results: Vec<CliResult<(PsReport, bool, bool, f64)>> = run.pool()?.install(|| {
        starts
            .par_iter()
            .map(|(_, x)| {
                let traj = flow(x, &spec, &cfg, horizon)?;
                Ok((ps_diagnostics(&traj), traj.converged, traj.partial, traj.final_action()))
            })
            .collect()
    });
    let mut table = Table::new(&["trajectory", "t", "step1", "step2_ratio", "step3", "par_norm", "tilde_norm"]);
    let mut summaries = Vec::new();
    for (i, (result, (kind, _))) in results.into_iter().zip(&starts).enumerate() {
        let (report, converged, partial, final_action) = result?;
        for row in &report.rows {
            table.push(vec![
                i.to_string(),
                num(row.t),
                num(row.step1),
                num(row.step2_ratio),
                num(row.step3),
                num(row.par_norm),
                num(row.tilde_norm),
            ]);
        }
        summaries.push(TrajectorySummary {
            trajectory: i,
            start: kind,
            converged,
            partial,
            final_action,
            final_step1: report.rows.last().map_or(0.0, |r| r.step1),
            flags: report.flags.clone(),
        });
    }
    let manifest = run.manifest("ps-diagnose", &["ps"], &["ps_summary.json"])?;
    let digest = manifest.digest();
    let mut w = Writer::new(run.out);
    w.table("ps", &table, &digest)?;
    w.json("ps_summary.json", &summaries);
    w.raw("manifest.json", manifest.to_json() + "\n");
    w.finish()?;
    let flagged: Vec<String> = summaries
        .iter()
        .filter(|s| !s.flags.is_empty())
        .map(|s| format!("trajectory {} ({})", s.trajectory, s.flags.join(", ")))
        .collect();
    Ok(Outcome {
        summary: format!("{} trajectories, {} flagged", summaries.len(), flagged.len()),
        failure: (!flagged.is_empty()).then(|| format!("diverging bounds: {}", flagged.join("; "))),
    })
}

pub fn gradient_check(run: &Run) -> CliResult<Outcome> {
    let spec = run.config.hamiltonian()?;
    let h = run.config.gradient_step;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut table = Table::new(&["point", "finite_difference", "analytic", "relative_error"]);
    let mut worst: f64 = 0.0;
    for i in 0..run.config.gradient_points {
        let x = random_point(&mut rng, run.config)?;
        let lam = x.frame().eigenvalues();
        let mut dir = || -> Vec<f64> { lam.iter().map(|l| rng.gen_range(-1.0..1.0) / (1.0 + l)).collect() };
        let (dq, dp) = (dir(), dir());
        let model = loopspace::action::ActionModel::for_point(&x, &spec);
        let at = |e: f64| {
            let q: Vec<f64> = x.q_coeffs().iter().zip(&dq).map(|(a, b)| a + e * b).collect();
            let p: Vec<f64> = x.p_coeffs().iter().zip(&dp).map(|(a, b)| a + e * b).collect();
            model.action(&q, &p)
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let analytic = gradient(&x, &spec)?.pairing(&dq, &dp);
        let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        table.push(vec![i.to_string(), num(fd), num(analytic), num(rel)]);
    }
    let manifest = run.manifest("gradient-check", &["gradient"], &[])?;
    let digest = manifest.digest();
    let mut w = Writer::new(run.out);
    w.table("gradient", &table, &digest)?;
    w.raw("manifest.json", manifest.to_json() + "\n");
    w.finish()?;
    let tol = run.config.gradient_tol;
    Ok(Outcome {
        summary: format!("{} points, max relative error {worst:.3e}", table.rows.len()),
        failure: (worst > tol).then(|| format!("relative error {worst:e} exceeds {tol:e}")),
    })
}
