//! Real trigonometric series on the unit period.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use parking_lot::Mutex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

static PLANS: Lazy<Mutex<(FftPlanner<f64>, HashMap<usize, Arc<dyn Fft<f64>>>)>> =
    Lazy::new(|| Mutex::new((FftPlanner::new(), HashMap::new())));

fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    let mut guard = PLANS.lock();
    let (planner, cache) = &mut *guard;
    cache
        .entry(len)
        .or_insert_with(|| planner.plan_fft_forward(len))
        .clone()
}

/// Uniform nodes `t_i = i / n` on `[0, 1)`.
pub fn nodes(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

/// `f(t) = a0 + Σ_{m=1}^{J} cos[m-1]·cos(2πmt) + sin[m-1]·sin(2πmt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigSeries {
    pub a0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl TrigSeries {
    pub fn zeros(modes: usize) -> Self {
        TrigSeries {
            a0: 0.0,
            cos: vec![0.0; modes],
            sin: vec![0.0; modes],
        }
    }

    pub fn modes(&self) -> usize {
        self.cos.len()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = self.a0;
        for (m, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let arg = TAU * (m + 1) as f64 * t;
            acc += c * arg.cos() + s * arg.sin();
        }
        acc
    }

    pub fn derivative(&self) -> TrigSeries {
        let mut out = TrigSeries::zeros(self.modes());
        for m in 0..self.modes() {
            let w = TAU * (m + 1) as f64;
            out.cos[m] = w * self.sin[m];
            out.sin[m] = -w * self.cos[m];
        }
        out
    }

    pub fn sample(&self, n: usize) -> Vec<f64> {
        nodes(n).into_iter().map(|t| self.eval(t)).collect()
    }

    /// Trigonometric interpolant of uniform samples, truncated to `modes`.
    ///
    /// Fails when the node count cannot resolve the requested modes; even node
    /// counts are accepted only below their Nyquist mode.
    pub fn from_samples(samples: &[f64], modes: usize) -> Result<TrigSeries> {
        let n = samples.len();
        if n == 0 || 2 * modes + 1 > n {
            return Err(Error::Aliasing { nodes: n, modes });
        }
        let plan = forward_plan(n);
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        plan.process(&mut buf);
        let scale = 1.0 / n as f64;
        let mut out = TrigSeries::zeros(modes);
        out.a0 = buf[0].re * scale;
        for m in 1..=modes {
            out.cos[m - 1] = 2.0 * buf[m].re * scale;
            out.sin[m - 1] = -2.0 * buf[m].im * scale;
        }
        Ok(out)
    }

    /// Resize to `modes`, dropping or zero-padding the tail.
    pub fn truncated(&self, modes: usize) -> TrigSeries {
        let mut out = TrigSeries::zeros(modes);
        out.a0 = self.a0;
        for m in 0..modes.min(self.modes()) {
            out.cos[m] = self.cos[m];
            out.sin[m] = self.sin[m];
        }
        out
    }

    /// Largest mode with a coefficient above `tol` in magnitude.
    pub fn effective_modes(&self, tol: f64) -> usize {
        (0..self.modes())
            .rev()
            .find(|&m| self.cos[m].abs() > tol || self.sin[m].abs() > tol)
            .map_or(0, |m| m + 1)
    }
}
