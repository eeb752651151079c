//! Eigenframes of `∇*∇` along loops and the fractional Sobolev structure they
//! induce.
//!
//! A frame for cutoff `J` spans the fields whose coordinates are trigonometric
//! polynomials of degree `≤ J`; it has dimension `D = n(2J+1)` and is sampled
//! on `2J+1` coarse nodes (exact for the space) and `4J+1` fine nodes (exact
//! quadrature for products of two fields and of nonlinear terms after
//! de-aliasing).

use std::collections::HashMap;
use std::f64::consts::{SQRT_2, TAU};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use once_cell::sync::Lazy;
use parking_lot::RwLock;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::nodes;
use crate::geometry::{covariant_derivative, LoopPath, ManifoldKind, ModelManifold, TangentFieldSamples};

/// Eigenvalues below this magnitude are treated as exact zeros.
pub const ZERO_EIGENVALUE: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-8;
const ORTHO_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameMethod {
    /// Closed-form Fourier eigenfields (flat models).
    Analytic,
    /// Dense symmetric eigensolve of the discretized operator.
    Dense,
}

type FrameKey = (ManifoldKind, usize, FrameMethod);

static FRAME_CACHE: Lazy<RwLock<HashMap<FrameKey, Arc<SpectralFrame>>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

#[derive(Debug)]
pub struct SpectralFrame {
    manifold: ModelManifold,
    modes: usize,
    method: FrameMethod,
    eigenvalues: Vec<f64>,
    kernel_dim: usize,
    /// Column `j` holds `ξ_j` on the coarse nodes, node-major.
    coarse: DMatrix<f64>,
    /// Column `j` holds `ξ_j` on the fine nodes, node-major.
    fine: DMatrix<f64>,
    /// Column `j` holds the frame coefficients of `∇ξ_j`.
    derivative: DMatrix<f64>,
    /// Column `k` holds the frame coefficients of the constant field `e_k`.
    constants: DMatrix<f64>,
    residual: f64,
    orthogonality_defect: f64,
}

fn field_column(field: &TangentFieldSamples) -> DVector<f64> {
    DVector::from_column_slice(field.as_slice())
}

fn check_modes(path: &LoopPath, modes: usize) -> Result<()> {
    if path.modes() > modes {
        return Err(Error::Aliasing {
            nodes: 2 * modes + 1,
            modes: path.modes(),
        });
    }
    Ok(())
}

fn cached(key: FrameKey, build: impl FnOnce() -> Result<SpectralFrame>) -> Result<Arc<SpectralFrame>> {
    if let Some(frame) = FRAME_CACHE.read().get(&key) {
        return Ok(frame.clone());
    }
    let frame = Arc::new(build()?);
    Ok(FRAME_CACHE.write().entry(key).or_insert(frame).clone())
}

/// Eigenframe of `∇*∇` along `path` with mode cutoff `modes`.
///
/// On the models the operator is `−d²/dt²` in angle coordinates, so the
/// closed-form Fourier frame is used; it is verified against the operator
/// before being returned and cached.
pub fn eigendecompose(path: &LoopPath, modes: usize) -> Result<Arc<SpectralFrame>> {
    check_modes(path, modes)?;
    let key = (path.manifold().kind(), modes, FrameMethod::Analytic);
    cached(key, || {
        let n = path.dim();
        let ns = 2 * modes + 1;
        let d = n * ns;
        let mut coarse = DMatrix::zeros(n * ns, d);
        let mut eigenvalues = vec![0.0; d];
        for k in 0..n {
            for i in 0..ns {
                coarse[(i * n + k, k)] = 1.0;
            }
        }
        for j in 1..=modes {
            let lam = (TAU * j as f64).powi(2);
            for k in 0..n {
                let c = n * (2 * j - 1) + k;
                let s = n * (2 * j) + k;
                eigenvalues[c] = lam;
                eigenvalues[s] = lam;
                for (i, t) in nodes(ns).into_iter().enumerate() {
                    let arg = TAU * j as f64 * t;
                    coarse[(i * n + k, c)] = SQRT_2 * arg.cos();
                    coarse[(i * n + k, s)] = SQRT_2 * arg.sin();
                }
            }
        }
        SpectralFrame::assemble(path, modes, FrameMethod::Analytic, eigenvalues, coarse)
    })
}

/// Eigenframe from a dense symmetric eigensolve of `Gᵀ G`, where `G` is the
/// covariant derivative acting on the orthonormal nodal basis.
pub fn eigendecompose_dense(path: &LoopPath, modes: usize) -> Result<Arc<SpectralFrame>> {
    check_modes(path, modes)?;
    let key = (path.manifold().kind(), modes, FrameMethod::Dense);
    cached(key, || {
        let n = path.dim();
        let ns = 2 * modes + 1;
        let d = n * ns;
        let mut g = DMatrix::zeros(d, d);
        for col in 0..d {
            let mut unit = vec![0.0; d];
            unit[col] = 1.0;
            let field = TangentFieldSamples::from_flat(n, unit)?;
            let dv = covariant_derivative(path, &field)?;
            g.set_column(col, &field_column(&dv));
        }
        let skew = (&g + g.transpose()).amax();
        if skew > RESIDUAL_TOL {
            return Err(Error::EigenResidual {
                index: 0,
                residual: skew,
                tolerance: RESIDUAL_TOL,
            });
        }
        let eig = SymmetricEigen::new(g.transpose() * &g);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let scale = (ns as f64).sqrt();
        let mut coarse = DMatrix::zeros(d, d);
        let mut eigenvalues = Vec::with_capacity(d);
        for (j, &idx) in order.iter().enumerate() {
            let lam = eig.eigenvalues[idx];
            eigenvalues.push(if lam.abs() < ZERO_EIGENVALUE { 0.0 } else { lam });
            coarse.set_column(j, &(eig.eigenvectors.column(idx) * scale));
        }
        SpectralFrame::assemble(path, modes, FrameMethod::Dense, eigenvalues, coarse)
    })
}

impl SpectralFrame {
    fn assemble(
        path: &LoopPath,
        modes: usize,
        method: FrameMethod,
        eigenvalues: Vec<f64>,
        coarse: DMatrix<f64>,
    ) -> Result<Self> {
        let n = path.dim();
        let ns = 2 * modes + 1;
        let nf = 4 * modes + 1;
        let d = eigenvalues.len();
        let inv = 1.0 / ns as f64;

        let gram = coarse.transpose() * &coarse * inv;
        let orthogonality_defect = (gram - DMatrix::<f64>::identity(d, d)).amax();
        if orthogonality_defect > ORTHO_TOL {
            return Err(Error::EigenResidual {
                index: 0,
                residual: orthogonality_defect,
                tolerance: ORTHO_TOL,
            });
        }

        let mut fine = DMatrix::zeros(n * nf, d);
        let mut derivative = DMatrix::zeros(d, d);
        let mut residual: f64 = 0.0;
        for j in 0..d {
            let xi = TangentFieldSamples::from_flat(n, coarse.column(j).iter().copied().collect())?;
            fine.set_column(j, &field_column(&xi.resampled(nf)?));
            let dxi = covariant_derivative(path, &xi)?;
            derivative.set_column(j, &(coarse.transpose() * field_column(&dxi) * inv));
            let ddxi = covariant_derivative(path, &dxi)?;
            let res = field_column(&ddxi.scaled(-1.0)) - field_column(&xi) * eigenvalues[j];
            let res = (res.norm_squared() * inv).sqrt();
            if res > RESIDUAL_TOL {
                return Err(Error::EigenResidual {
                    index: j,
                    residual: res,
                    tolerance: RESIDUAL_TOL,
                });
            }
            residual = residual.max(res);
        }

        let mut constants = DMatrix::zeros(d, n);
        for k in 0..n {
            let mut e = DVector::zeros(n * ns);
            for i in 0..ns {
                e[i * n + k] = 1.0;
            }
            constants.set_column(k, &(coarse.transpose() * e * inv));
        }

        let kernel_dim = eigenvalues.iter().filter(|&&l| l == 0.0).count();
        Ok(SpectralFrame {
            manifold: path.manifold().clone(),
            modes,
            method,
            eigenvalues,
            kernel_dim,
            coarse,
            fine,
            derivative,
            constants,
            residual,
            orthogonality_defect,
        })
    }

    pub fn manifold(&self) -> &ModelManifold {
        &self.manifold
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn method(&self) -> FrameMethod {
        self.method
    }

    /// Dimension `D` of the truncated field space.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn coarse_nodes(&self) -> usize {
        2 * self.modes + 1
    }

    pub fn fine_nodes(&self) -> usize {
        4 * self.modes + 1
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_dim
    }

    /// Largest eigen-residual `‖∇*∇ξ_j − λ_j ξ_j‖` seen during construction.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn orthogonality_defect(&self) -> f64 {
        self.orthogonality_defect
    }

    pub fn coarse_matrix(&self) -> &DMatrix<f64> {
        &self.coarse
    }

    pub fn fine_matrix(&self) -> &DMatrix<f64> {
        &self.fine
    }

    pub fn derivative_matrix(&self) -> &DMatrix<f64> {
        &self.derivative
    }

    pub fn constant_modes(&self) -> &DMatrix<f64> {
        &self.constants
    }

    /// `(1 + λ_j)^e` for every index.
    pub fn weights(&self, e: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| (1.0 + l).powf(e)).collect()
    }

    pub fn eigenfield(&self, j: usize) -> TangentFieldSamples {
        TangentFieldSamples::from_flat(self.dim(), self.coarse.column(j).iter().copied().collect())
            .expect("frame column has node-major layout")
    }

    /// L² projection of a field onto the frame.
    pub fn expand(&self, field: &TangentFieldSamples) -> Result<Vec<f64>> {
        if field.dim() != self.dim() {
            return Err(Error::Invalid("field dimension does not match the frame".into()));
        }
        let f = field.resampled(self.coarse_nodes())?;
        let c = self.coarse.transpose() * field_column(&f) / self.coarse_nodes() as f64;
        Ok(c.iter().copied().collect())
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> TangentFieldSamples {
        let v = &self.coarse * DVector::from_column_slice(coeffs);
        TangentFieldSamples::from_flat(self.dim(), v.iter().copied().collect())
            .expect("frame column has node-major layout")
    }

    pub fn synthesize_fine(&self, coeffs: &[f64]) -> TangentFieldSamples {
        let v = &self.fine * DVector::from_column_slice(coeffs);
        TangentFieldSamples::from_flat(self.dim(), v.iter().copied().collect())
            .expect("frame column has node-major layout")
    }

    /// `‖ξ_j‖_∞` measured on `oversample·(2J+1)` nodes.
    pub fn sup_norms(&self, oversample: usize) -> Result<Vec<f64>> {
        let target = oversample.max(1) * self.coarse_nodes();
        (0..self.len())
            .map(|j| Ok(self.eigenfield(j).resampled(target)?.sup_norm()))
            .collect()
    }

    pub fn same_as(&self, other: &SpectralFrame) -> bool {
        std::ptr::eq(self, other)
            || (self.manifold == other.manifold && self.modes == other.modes && self.method == other.method)
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct FrameJson<'a> {
            manifold: &'a ModelManifold,
            modes: usize,
            method: FrameMethod,
            eigenvalues: &'a [f64],
            kernel_dim: usize,
            residual: f64,
            eigenfields: Vec<Vec<f64>>,
        }
        Ok(serde_json::to_string(&FrameJson {
            manifold: &self.manifold,
            modes: self.modes,
            method: self.method,
            eigenvalues: &self.eigenvalues,
            kernel_dim: self.kernel_dim,
            residual: self.residual,
            eigenfields: (0..self.len())
                .map(|j| self.coarse.column(j).iter().copied().collect())
                .collect(),
        })?)
    }
}

/// A field along a loop in the coordinates of its eigenframe.
#[derive(Clone, Debug)]
pub struct FiberField {
    frame: Arc<SpectralFrame>,
    coeffs: Vec<f64>,
}

impl FiberField {
    pub fn new(frame: Arc<SpectralFrame>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != frame.len() {
            return Err(Error::Invalid(format!(
                "{} coefficients for a frame of dimension {}",
                coeffs.len(),
                frame.len()
            )));
        }
        Ok(FiberField { frame, coeffs })
    }

    pub fn zeros(frame: Arc<SpectralFrame>) -> Self {
        let d = frame.len();
        FiberField { frame, coeffs: vec![0.0; d] }
    }

    pub fn from_samples(frame: Arc<SpectralFrame>, field: &TangentFieldSamples) -> Result<Self> {
        let coeffs = frame.expand(field)?;
        Ok(FiberField { frame, coeffs })
    }

    pub fn frame(&self) -> &Arc<SpectralFrame> {
        &self.frame
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn samples(&self) -> TangentFieldSamples {
        self.frame.synthesize(&self.coeffs)
    }

    /// `‖·‖_r`.
    pub fn norm(&self, r: f64) -> f64 {
        weighted_dot(&self.frame.weights(r), &self.coeffs, &self.coeffs).sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `∇_{q̇}` of the field, kept in the frame.
    pub fn covariant_derivative(&self) -> FiberField {
        let c = self.frame.derivative_matrix() * DVector::from_column_slice(&self.coeffs);
        FiberField {
            frame: self.frame.clone(),
            coeffs: c.iter().copied().collect(),
        }
    }

    fn map_weights(&self, w: &[f64]) -> FiberField {
        FiberField {
            frame: self.frame.clone(),
            coeffs: self.coeffs.iter().zip(w).map(|(c, w)| c * w).collect(),
        }
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

fn ensure_frame(frame: &SpectralFrame, field: &FiberField) -> Result<()> {
    if frame.same_as(&field.frame) {
        Ok(())
    } else {
        Err(Error::FrameMismatch)
    }
}

/// `A^r = (1 + ∇*∇)^{r/2}`.
pub fn fractional_apply(frame: &SpectralFrame, r: f64, field: &FiberField) -> Result<FiberField> {
    ensure_frame(frame, field)?;
    Ok(field.map_weights(&frame.weights(r / 2.0)))
}

/// `⟨ξ, ζ⟩_r = Σ (1 + λ_j)^r ξ_j ζ_j`.
pub fn inner_r(frame: &SpectralFrame, r: f64, xi: &FiberField, zeta: &FiberField) -> Result<f64> {
    ensure_frame(frame, xi)?;
    ensure_frame(frame, zeta)?;
    Ok(weighted_dot(&frame.weights(r), &xi.coeffs, &zeta.coeffs))
}

/// `ȷ*_{1−s} = (1 + ∇*∇)^{s−1}`.
pub fn adjoint_inclusion(frame: &SpectralFrame, s: f64, v: &FiberField) -> Result<FiberField> {
    if !(s > 0.5 && s < 1.0) {
        return Err(Error::Invalid(format!("s = {s} must lie in (1/2, 1)")));
    }
    ensure_frame(frame, v)?;
    Ok(v.map_weights(&frame.weights(s - 1.0)))
}

/// Fractional inner products induced by the isometric embedding.
///
/// `L0` is the operator of the quadratic form `‖ξ‖² + ‖d/dt(dE·ξ)‖²` on the
/// truncated field space. The ambient derivative splits into the tangential
/// part `∇ξ` and the normal part `−ξ_k q̇_k / R_k`, so in the eigenframe
/// `L0 = 1 + Λ + N` with `N_ij = ∫ Σ_k ξ_i,k ξ_j,k (q̇_k/R_k)²`. The form of
/// order `r` is `ξᵀ L0^r ζ`.
#[derive(Clone, Debug)]
pub struct EmbeddedMetric {
    frame: Arc<SpectralFrame>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl EmbeddedMetric {
    pub fn new(path: &LoopPath, frame: Arc<SpectralFrame>) -> Result<Self> {
        check_modes(path, frame.modes())?;
        let n = frame.dim();
        let nf = frame.fine_nodes();
        let d = frame.len();
        let mut weighted = frame.fine_matrix().clone();
        for (i, t) in nodes(nf).into_iter().enumerate() {
            let v = path.velocity(t);
            for k in 0..n {
                let w = v[k] / frame.manifold().radius(k);
                weighted.row_mut(i * n + k).scale_mut(w * w);
            }
        }
        let mut l0 = frame.fine_matrix().transpose() * weighted / nf as f64;
        for j in 0..d {
            l0[(j, j)] += 1.0 + frame.eigenvalues()[j];
        }
        let l0 = (&l0 + l0.transpose()) * 0.5;
        let eig = SymmetricEigen::new(l0);
        Ok(EmbeddedMetric {
            frame,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn frame(&self) -> &Arc<SpectralFrame> {
        &self.frame
    }

    /// Spectrum of `L0`, unsorted.
    pub fn operator_eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn inner(&self, r: f64, xi: &[f64], zeta: &[f64]) -> f64 {
        let a = self.eigenvectors.tr_mul(&DVector::from_column_slice(xi));
        let b = self.eigenvectors.tr_mul(&DVector::from_column_slice(zeta));
        let w: Vec<f64> = self.eigenvalues.iter().map(|m| m.powf(r)).collect();
        weighted_dot(&w, a.as_slice(), b.as_slice())
    }

    pub fn norm(&self, r: f64, xi: &[f64]) -> f64 {
        self.inner(r, xi, xi).max(0.0).sqrt()
    }
}

/// `⟨ξ, ζ⟩^emb_r` for sampled fields along `path`, `r ∈ [−1, 1]`.
pub fn inner_r_emb(
    path: &LoopPath,
    r: f64,
    xi: &TangentFieldSamples,
    zeta: &TangentFieldSamples,
) -> Result<f64> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(Error::Invalid(format!("r = {r} outside [-1, 1]")));
    }
    let modes = xi.band().max(zeta.band()).max(path.modes());
    let frame = eigendecompose(path, modes)?;
    let a = frame.expand(xi)?;
    let b = frame.expand(zeta)?;
    Ok(EmbeddedMetric::new(path, frame)?.inner(r, &a, &b))
}

/// Constants of `c(j² − d) ≤ λ_j ≤ C(j² + d)` fitted to a computed spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GrowthFit {
    pub c: f64,
    pub big_c: f64,
    pub d: f64,
}

impl GrowthFit {
    /// `c`, `C` from the extreme ratios `λ_j / j²` over the upper half of the
    /// spectrum, then the least `d ≥ 0` that makes both bounds hold.
    pub fn fit(eigenvalues: &[f64]) -> Result<Self> {
        let len = eigenvalues.len();
        let ratios: Vec<f64> = (len / 2..len)
            .filter(|&j| j > 0)
            .map(|j| eigenvalues[j] / (j * j) as f64)
            .collect();
        let c = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let big_c = ratios.iter().cloned().fold(0.0, f64::max);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Invalid("spectrum too short or degenerate to fit".into()));
        }
        let d = eigenvalues
            .iter()
            .enumerate()
            .map(|(j, &l)| {
                let j2 = (j * j) as f64;
                (j2 - l / c).max(l / big_c - j2)
            })
            .fold(0.0, f64::max);
        Ok(GrowthFit { c, big_c, d })
    }

    pub fn holds(&self, eigenvalues: &[f64]) -> bool {
        eigenvalues.iter().enumerate().all(|(j, &l)| {
            let j2 = (j * j) as f64;
            let slack = 1e-9 * (1.0 + l);
            self.c * (j2 - self.d) <= l + slack && l <= self.big_c * (j2 + self.d) + slack
        })
    }
}
