//! Model manifolds, loops and vector fields along loops.
//!
//! Both models are flat products of circles `ℝ/(2πR_k ℤ)` written in global
//! angle coordinates `q_k` with period `2πR_k`. Each circle factor embeds
//! isometrically as `R_k (cos(q_k/R_k), sin(q_k/R_k))`; the flat torus
//! `ℝⁿ/ℤⁿ` uses `R_k = 1/(2π)` and the unit circle uses `R = 1`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{nodes, TrigSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ManifoldKind {
    FlatTorus { dim: usize },
    EmbeddedCircle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifold {
    kind: ManifoldKind,
    radii: Vec<f64>,
}

impl ModelManifold {
    pub fn flat_torus(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("torus dimension must be positive".into()));
        }
        Ok(ModelManifold {
            kind: ManifoldKind::FlatTorus { dim },
            radii: vec![1.0 / TAU; dim],
        })
    }

    pub fn embedded_circle() -> Self {
        ModelManifold {
            kind: ManifoldKind::EmbeddedCircle,
            radii: vec![1.0],
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.radii.len()
    }

    pub fn embedding_dim(&self) -> usize {
        2 * self.dim()
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.radii[k]
    }

    /// Coordinate period of the `k`-th factor.
    pub fn period(&self, k: usize) -> f64 {
        TAU * self.radii[k]
    }

    pub fn injectivity_radius(&self) -> f64 {
        self.radii.iter().cloned().fold(f64::INFINITY, f64::min) * std::f64::consts::PI
    }

    pub fn is_simply_connected(&self) -> bool {
        false
    }

    /// Metric tensor in the angle coordinates.
    pub fn metric(&self, _q: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim())
    }

    /// `Γ(q)(u, v)` as a coordinate vector.
    pub fn christoffel(&self, _q: &[f64], _u: &[f64], _v: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// `R(x, y) z` as a coordinate vector.
    pub fn curvature(&self, _q: &[f64], _x: &[f64], _y: &[f64], _z: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    pub fn inner(&self, q: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let g = self.metric(q);
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += g[(i, j)] * u[i] * v[j];
            }
        }
        acc
    }

    pub fn norm(&self, q: &[f64], v: &[f64]) -> f64 {
        self.inner(q, v, v).sqrt()
    }

    pub fn embed_point(&self, q: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.embedding_dim());
        for (k, &r) in self.radii.iter().enumerate() {
            let th = q[k] / r;
            out.push(r * th.cos());
            out.push(r * th.sin());
        }
        out
    }

    /// Pushforward `dE_q v`.
    pub fn embed_vector(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.embedding_dim());
        for (k, &r) in self.radii.iter().enumerate() {
            let th = q[k] / r;
            out.push(-v[k] * th.sin());
            out.push(v[k] * th.cos());
        }
        out
    }

    /// Second derivative `D²E_q(u, v)`; purely normal on the models.
    pub fn embed_hessian(&self, q: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.embedding_dim());
        for (k, &r) in self.radii.iter().enumerate() {
            let th = q[k] / r;
            let c = -u[k] * v[k] / r;
            out.push(c * th.cos());
            out.push(c * th.sin());
        }
        out
    }

    /// Tangential part of an ambient vector at `E(q)`, in coordinates.
    pub fn pull_back_vector(&self, q: &[f64], ambient: &[f64]) -> Vec<f64> {
        self.radii
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let th = q[k] / r;
                -ambient[2 * k] * th.sin() + ambient[2 * k + 1] * th.cos()
            })
            .collect()
    }

    /// Canonical representative of a lifted point: reduced coordinates in
    /// `[0, 1)ⁿ` on the torus, the point of `ℝ²` on the circle.
    pub fn canonical_point(&self, q: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::FlatTorus { .. } => q.iter().map(|x| x.rem_euclid(1.0)).collect(),
            ManifoldKind::EmbeddedCircle => self.embed_point(q),
        }
    }
}

/// Tangent vectors at uniformly spaced parameters `t_i = i / m`, stored node
/// by node in angle coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFieldSamples {
    dim: usize,
    values: Vec<f64>,
}

impl TangentFieldSamples {
    pub fn zeros(dim: usize, nodes: usize) -> Self {
        TangentFieldSamples {
            dim,
            values: vec![0.0; dim * nodes],
        }
    }

    pub fn from_flat(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 || values.is_empty() {
            return Err(Error::Invalid(format!(
                "{} values do not split into vectors of dimension {dim}",
                values.len()
            )));
        }
        Ok(TangentFieldSamples { dim, values })
    }

    pub fn from_fn(dim: usize, nodes_count: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(dim * nodes_count);
        for t in nodes(nodes_count) {
            let v = f(t);
            debug_assert_eq!(v.len(), dim);
            values.extend_from_slice(&v);
        }
        TangentFieldSamples { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.dim).copied().collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        TangentFieldSamples {
            dim: self.dim,
            values: self.values.iter().map(|x| c * x).collect(),
        }
    }

    /// Pointwise product with a scalar function sampled on the same nodes.
    pub fn multiplied(&self, f: &[f64]) -> Self {
        let mut out = self.clone();
        for (i, fi) in f.iter().enumerate() {
            for x in &mut out.values[i * self.dim..(i + 1) * self.dim] {
                *x *= fi;
            }
        }
        out
    }

    /// L² product by the trapezoid rule (identity metric).
    pub fn l2_inner(&self, other: &Self) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        dot / self.node_count() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        (0..self.node_count())
            .map(|i| self.at(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Per-coordinate trigonometric interpolants up to `modes`.
    pub fn series(&self, modes: usize) -> Result<Vec<TrigSeries>> {
        (0..self.dim)
            .map(|k| TrigSeries::from_samples(&self.component(k), modes))
            .collect()
    }

    /// Band limit resolvable by the node count.
    pub fn band(&self) -> usize {
        (self.node_count() - 1) / 2
    }

    /// Trigonometric resampling onto `target` nodes.
    pub fn resampled(&self, target: usize) -> Result<Self> {
        if target == self.node_count() {
            return Ok(self.clone());
        }
        let band = self.band().min(target.saturating_sub(1) / 2);
        let series = self.series(band)?;
        Ok(from_series(&series, target))
    }
}

pub(crate) fn from_series(series: &[TrigSeries], nodes_count: usize) -> TangentFieldSamples {
    let cols: Vec<Vec<f64>> = series.iter().map(|s| s.sample(nodes_count)).collect();
    let dim = series.len();
    let mut values = Vec::with_capacity(dim * nodes_count);
    for i in 0..nodes_count {
        for col in &cols {
            values.push(col[i]);
        }
    }
    TangentFieldSamples { dim, values }
}

/// A free loop: winding class plus the anchored Fourier series
/// `q_k(t) = base_k + P_k w_k t + Σ_m cos[m][k]·(cos 2πmt − 1) + sin[m][k]·sin 2πmt`
/// with `P_k` the coordinate period, so that `q(0) = base`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopPath {
    manifold: ModelManifold,
    winding: Vec<i64>,
    base: Vec<f64>,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LoopJson {
    winding: Vec<i64>,
    base: Vec<f64>,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

impl LoopPath {
    pub fn new(
        manifold: ModelManifold,
        winding: Vec<i64>,
        base: Vec<f64>,
        cos: Vec<Vec<f64>>,
        sin: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = manifold.dim();
        if winding.len() != n || base.len() != n {
            return Err(Error::Invalid(format!(
                "winding and base must have {n} components"
            )));
        }
        if cos.len() != sin.len() {
            return Err(Error::Invalid("cos and sin mode counts differ".into()));
        }
        if cos.iter().chain(&sin).any(|row| row.len() != n) {
            return Err(Error::Invalid(format!("every mode needs {n} coordinates")));
        }
        let finite = base.iter().chain(cos.iter().flatten()).chain(sin.iter().flatten());
        if finite.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite loop coefficient".into()));
        }
        Ok(LoopPath {
            manifold,
            winding,
            base,
            cos,
            sin,
        })
    }

    pub fn straight(manifold: ModelManifold, winding: Vec<i64>, base: Vec<f64>) -> Result<Self> {
        LoopPath::new(manifold, winding, base, Vec::new(), Vec::new())
    }

    /// Loop with given winding whose periodic part is `periodic[k]`.
    pub fn from_periodic(
        manifold: ModelManifold,
        winding: Vec<i64>,
        periodic: &[TrigSeries],
    ) -> Result<Self> {
        let n = manifold.dim();
        if periodic.len() != n {
            return Err(Error::Invalid(format!("need {n} periodic series")));
        }
        let modes = periodic.iter().map(|s| s.modes()).max().unwrap_or(0);
        let mut cos = vec![vec![0.0; n]; modes];
        let mut sin = vec![vec![0.0; n]; modes];
        let mut base = vec![0.0; n];
        for (k, s) in periodic.iter().enumerate() {
            base[k] = s.eval(0.0);
            for m in 0..s.modes() {
                cos[m][k] = s.cos[m];
                sin[m][k] = s.sin[m];
            }
        }
        LoopPath::new(manifold, winding, base, cos, sin)
    }

    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn winding(&self) -> &[i64] {
        &self.winding
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn modes(&self) -> usize {
        self.cos.len()
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    /// `P_k w_k`, the coordinate drift per period.
    pub fn drift(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| self.manifold.period(k) * self.winding[k] as f64)
            .collect()
    }

    /// Periodic part `q_k(t) − P_k w_k t` as a trigonometric series.
    pub fn periodic_part(&self, k: usize) -> TrigSeries {
        let mut s = TrigSeries::zeros(self.modes());
        s.a0 = self.base[k];
        for m in 0..self.modes() {
            s.cos[m] = self.cos[m][k];
            s.sin[m] = self.sin[m][k];
            s.a0 -= self.cos[m][k];
        }
        s
    }

    /// Lifted coordinates `q(t)`.
    pub fn coords(&self, t: f64) -> Vec<f64> {
        let drift = self.drift();
        (0..self.dim())
            .map(|k| {
                let mut x = self.base[k] + drift[k] * t;
                for m in 0..self.modes() {
                    let arg = TAU * (m + 1) as f64 * t;
                    x += self.cos[m][k] * (arg.cos() - 1.0) + self.sin[m][k] * arg.sin();
                }
                x
            })
            .collect()
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let drift = self.drift();
        (0..self.dim())
            .map(|k| {
                let mut v = drift[k];
                for m in 0..self.modes() {
                    let w = TAU * (m + 1) as f64;
                    let arg = w * t;
                    v += w * (-self.cos[m][k] * arg.sin() + self.sin[m][k] * arg.cos());
                }
                v
            })
            .collect()
    }

    pub fn sample_coords(&self, nodes_count: usize) -> Vec<Vec<f64>> {
        nodes(nodes_count).into_iter().map(|t| self.coords(t)).collect()
    }

    pub fn velocity_field(&self, nodes_count: usize) -> TangentFieldSamples {
        TangentFieldSamples::from_fn(self.dim(), nodes_count, |t| self.velocity(t))
    }

    /// `t ↦ q(t) + h(t)` in coordinates (the exponential map on flat models).
    pub fn displaced(&self, h: &TangentFieldSamples) -> Result<LoopPath> {
        if h.dim() != self.dim() {
            return Err(Error::Invalid("displacement dimension mismatch".into()));
        }
        let series = h.series(h.band())?;
        let modes = self.modes().max(h.band());
        let periodic: Vec<TrigSeries> = (0..self.dim())
            .map(|k| {
                let mut s = self.periodic_part(k).truncated(modes);
                let d = series[k].truncated(modes);
                s.a0 += d.a0;
                for m in 0..modes {
                    s.cos[m] += d.cos[m];
                    s.sin[m] += d.sin[m];
                }
                s
            })
            .collect();
        LoopPath::from_periodic(self.manifold.clone(), self.winding.clone(), &periodic)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&LoopJson {
            winding: self.winding.clone(),
            base: self.base.clone(),
            cos: self.cos.clone(),
            sin: self.sin.clone(),
        })?)
    }

    pub fn from_json(manifold: ModelManifold, text: &str) -> Result<Self> {
        let raw: LoopJson = serde_json::from_str(text)?;
        LoopPath::new(manifold, raw.winding, raw.base, raw.cos, raw.sin)
    }
}

/// `q(t)` as a point of the manifold (see [`ModelManifold::canonical_point`]).
pub fn evaluate_loop(path: &LoopPath, t: f64) -> Vec<f64> {
    path.manifold.canonical_point(&path.coords(t))
}

/// `∇_{q̇} ξ = ξ̇ + Γ(q̇, ξ)` on the sampling nodes of `field`.
pub fn covariant_derivative(
    path: &LoopPath,
    field: &TangentFieldSamples,
) -> Result<TangentFieldSamples> {
    let m = field.node_count();
    if m < 2 * path.modes() + 1 {
        return Err(Error::Aliasing {
            nodes: m,
            modes: path.modes(),
        });
    }
    let series = field.series(field.band())?;
    let deriv: Vec<TrigSeries> = series.iter().map(TrigSeries::derivative).collect();
    let mut out = from_series(&deriv, m);
    let man = path.manifold();
    for (i, t) in nodes(m).into_iter().enumerate() {
        let q = path.coords(t);
        let gamma = man.christoffel(&q, &path.velocity(t), field.at(i));
        for k in 0..field.dim() {
            out.values[i * field.dim() + k] += gamma[k];
        }
    }
    Ok(out)
}

/// Pushforward of a field through the embedding, one ambient vector per node.
pub fn embed_field(path: &LoopPath, field: &TangentFieldSamples) -> Vec<Vec<f64>> {
    let m = field.node_count();
    nodes(m)
        .into_iter()
        .enumerate()
        .map(|(i, t)| path.manifold.embed_vector(&path.coords(t), field.at(i)))
        .collect()
}

/// `d/dt (dE_{q(t)} ξ(t))` in ambient space.
pub fn ambient_derivative(
    path: &LoopPath,
    field: &TangentFieldSamples,
) -> Result<Vec<Vec<f64>>> {
    let m = field.node_count();
    let series = field.series(field.band())?;
    let deriv = from_series(
        &series.iter().map(TrigSeries::derivative).collect::<Vec<_>>(),
        m,
    );
    let man = path.manifold();
    Ok(nodes(m)
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let q = path.coords(t);
            let mut a = man.embed_vector(&q, deriv.at(i));
            let b = man.embed_hessian(&q, &path.velocity(t), field.at(i));
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        })
        .collect())
}
