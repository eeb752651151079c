//! Run configuration: a versioned defaults file overlaid by a user file and
//! command-line flags, plus the manifest written next to every run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use loopspace::flow::FlowConfig;
use loopspace::minimax::family_alpha;
use loopspace::{HamiltonianSpec, LoopPath, ManifoldKind, ModelManifold};

use crate::error::{CliError, CliResult};

pub const DEFAULTS: &str = include_str!("../config/defaults.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub winding: Vec<i64>,
    pub base: Vec<f64>,
    pub cos: Vec<Vec<f64>>,
    pub sin: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub config_version: u32,
    pub manifold: ManifoldKind,
    #[serde(rename = "loop")]
    pub loop_path: LoopConfig,
    pub rho0: f64,
    pub rho1: f64,
    pub rho_star: f64,
    pub delta: f64,
    pub r: f64,
    #[serde(rename = "J")]
    pub modes: usize,
    pub s: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub t0: f64,
    pub dt: f64,
    pub grad_tol: f64,
    pub t_max: f64,
    pub accept_steps: usize,
    pub use_cutoff: bool,
    pub starts: usize,
    pub r_grid: Vec<f64>,
    pub n_range: [usize; 2],
    pub r_list: Vec<f64>,
    pub ps_seeds: usize,
    /// Constant momentum for an extra, fixed ps-diagnose start.
    pub ps_momentum: Option<Vec<f64>>,
    pub ps_horizon: f64,
    pub gradient_points: usize,
    pub gradient_step: f64,
    pub gradient_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULTS).expect("bundled defaults parse")
    }
}

/// What `--config` pointed at.
pub enum Loaded {
    Config(RunConfig),
    Manifest(Box<RunManifest>),
}

impl RunConfig {
    /// Parse `text` as a manifest or as a partial config over the defaults.
    pub fn parse(text: &str) -> CliResult<Loaded> {
        let user: Value = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let Value::Object(fields) = user else {
            return Err(CliError::Usage("config: expected a JSON object".into()));
        };
        if fields.contains_key("command") && fields.contains_key("config") {
            let manifest: RunManifest = serde_json::from_value(Value::Object(fields))
                .map_err(|e| CliError::Usage(format!("manifest: {e}")))?;
            manifest.config.validate()?;
            return Ok(Loaded::Manifest(Box::new(manifest)));
        }
        let mut merged: Value = serde_json::from_str(DEFAULTS).expect("bundled defaults parse");
        merged.as_object_mut().expect("defaults are an object").extend(fields);
        let config: RunConfig =
            serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        config.validate()?;
        Ok(Loaded::Config(config))
    }

    pub fn load(path: &Path) -> CliResult<Loaded> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.hamiltonian()?;
        self.loop_path()?;
        self.flow_template().validate()?;
        let bad = |m: &str| Err(CliError::Usage(m.into()));
        if self.n_range[0] == 0 || self.n_range[0] > self.n_range[1] {
            return bad("n_range must be [lo, hi] with 1 <= lo <= hi");
        }
        if self.r_list.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("r_list entries must lie in [0, 1]");
        }
        if !(self.ps_horizon > 0.0 && self.gradient_step > 0.0 && self.gradient_tol > 0.0) {
            return bad("ps_horizon, gradient_step and gradient_tol must be positive");
        }
        if let Some(p) = &self.ps_momentum {
            if p.len() != self.manifold_model()?.dim() {
                return bad("ps_momentum must have one entry per coordinate");
            }
        }
        Ok(())
    }

    pub fn manifold_model(&self) -> CliResult<ModelManifold> {
        Ok(match self.manifold {
            ManifoldKind::FlatTorus { dim } => ModelManifold::flat_torus(dim)?,
            ManifoldKind::EmbeddedCircle => ModelManifold::embedded_circle(),
        })
    }

    pub fn loop_path(&self) -> CliResult<LoopPath> {
        let l = &self.loop_path;
        Ok(LoopPath::new(
            self.manifold_model()?,
            l.winding.clone(),
            l.base.clone(),
            l.cos.clone(),
            l.sin.clone(),
        )?)
    }

    pub fn hamiltonian(&self) -> CliResult<HamiltonianSpec> {
        Ok(HamiltonianSpec::new(self.rho0, self.rho1, self.rho_star, self.delta, self.r)?)
    }

    fn flow_template(&self) -> FlowConfig {
        self.apply(FlowConfig::derived(1.0, self.gamma, self.epsilon))
    }

    fn apply(&self, mut cfg: FlowConfig) -> FlowConfig {
        cfg.s = self.s;
        cfg.modes = self.modes;
        cfg.t0 = self.t0;
        cfg.dt = self.dt;
        cfg.grad_tol = self.grad_tol;
        cfg.t_max = self.t_max;
        cfg.accept_steps = self.accept_steps;
        cfg.use_cutoff = self.use_cutoff;
        cfg.starts = self.starts;
        cfg
    }

    /// Flow parameters with radii derived from `α` of the configured loop.
    pub fn flow_config(&self) -> CliResult<FlowConfig> {
        let family = [self.loop_path()?];
        let alpha = family_alpha(&family, &self.hamiltonian()?, &self.flow_template())?;
        Ok(self.apply(FlowConfig::derived(alpha, self.gamma, self.epsilon)))
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub flow: FlowConfig,
    pub hamiltonian: HamiltonianSpec,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, seed: u64, artifacts: &[&str]) -> CliResult<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config: config.clone(),
            flow: config.flow_config()?,
            hamiltonian: config.hamiltonian()?,
            seed,
            artifacts: artifacts.iter().map(|a| a.to_string()).collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("manifest: {e}")))
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
