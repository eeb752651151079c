//! Spectral numerics for the Hamiltonian action on mixed-regularity loop spaces
//! of model cotangent bundles.
//!
//! The crate works on flat model manifolds (flat tori `Tⁿ = ℝⁿ/ℤⁿ` and the unit
//! circle in `ℝ²`). Loops are stored by their winding class plus a truncated
//! Fourier series, vector fields along loops are sampled on uniform grids, and
//! every fractional Sobolev quantity is computed exactly on the truncated
//! spectrum of `1 + ∇*∇` along the loop.
//!
//! Module map:
//!
//! * [`geometry`]: model manifolds, loops, fields along loops, covariant
//!   derivative and isometric embedding.
//! * [`spectral`]: eigenframes of `∇*∇`, fractional powers, intrinsic and
//!   embedded inner products, adjoint inclusions.
//! * [`hamiltonian`]: the cut-off Hamiltonian family `H_r`, its vector field,
//!   the fake-geodesic threshold `r₀` and the action bound `α`.
//! * [`action`]: phase points, the action functional, its gradient for the
//!   `(s, 1−s)` metric and classification of critical points.
//! * [`flow`]: the truncated normalized negative gradient flow, the
//!   representation coefficients `a`, `b` and Palais–Smale diagnostics.
//! * [`minimax`]: the minimax value `θ(r)`, critical point search and the
//!   sweep over `r` that looks for closed characteristics.

pub mod action;
pub mod error;
pub mod flow;
pub mod fourier;
pub mod geometry;
pub mod hamiltonian;
pub mod minimax;
pub mod spectral;

pub use action::{
    action, classify_critical, gradient, hamilton_residual, rescale_period, Classification,
    HamiltonResidual, PeriodicOrbit, PhaseGradient, PhasePoint,
};
pub use error::{Error, Result};
pub use flow::{
    flow, flow_step, ps_diagnostics, representation_coefficients, FlowConfig, FlowTrajectory,
    PsReport, RepresentationSample,
};
pub use geometry::{
    covariant_derivative, embed_field, evaluate_loop, LoopPath, ManifoldKind, ModelManifold,
    TangentFieldSamples,
};
pub use hamiltonian::{
    fake_geodesic_action, hamiltonian_vector_field, r0_threshold, Branch, HamiltonianSpec,
};
pub use minimax::{minimax_theta, orbit_sweep, MinimaxRecord, SweepReport};
pub use spectral::{
    adjoint_inclusion, eigendecompose, eigendecompose_dense, fractional_apply, inner_r,
    inner_r_emb, EmbeddedMetric, FiberField, SpectralFrame,
};
