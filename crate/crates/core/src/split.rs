//! Generic semi-discrete splitting for scalar SDEs
//! `dx = (f1(t, x) + f2(t, x)) dt + g(t, x) dW`.
//!
//! Each step freezes `f1` at the left node, takes the explicit update
//! `y_tilde = y + f1(t_n, y) dt`, then solves the remaining sub-SDE
//! `dy = f2 dt + g dW` from `y_tilde` in closed form over the step.

use crate::error::{Error, Result};
use crate::model::WfParams;
use crate::scalar;

pub trait SplitSystem {
    /// Part of the drift handled by the explicit update.
    fn f1(&self, t: f64, x: f64) -> f64;
    /// Part of the drift kept in the sub-SDE.
    fn f2(&self, t: f64, x: f64) -> f64;
    fn g(&self, t: f64, x: f64) -> f64;

    /// Original drift of the SDE.
    fn drift(&self, t: f64, x: f64) -> f64;
    /// Original diffusion of the SDE.
    fn diffusion(&self, t: f64, x: f64) -> f64;

    /// Closed-form solution of `dy = f2 dt + g dW` on `[t_n, t_n + dt]`
    /// started at `y_tilde`, with `frozen` the value at `t_n`.
    fn exact_substep(&self, t_n: f64, dt: f64, frozen: f64, y_tilde: f64, dw: f64) -> Result<f64>;
}

/// Uniform grid `t_n = n * horizon / steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || steps == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs a positive horizon and at least one step (got {horizon}, {steps})"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }
}

pub fn drift_update<S: SplitSystem + ?Sized>(sys: &S, t_n: f64, y: f64, dt: f64) -> f64 {
    y + sys.f1(t_n, y) * dt
}

/// Node values `y_0, ..., y_N` of the split scheme driven by `increments`.
pub fn integrate_path<S: SplitSystem + ?Sized>(
    sys: &S,
    grid: &TimeGrid,
    y0: f64,
    increments: &[f64],
) -> Result<Vec<f64>> {
    if increments.len() != grid.steps {
        return Err(Error::InvalidParameter(format!(
            "{} increments for a grid of {} steps",
            increments.len(),
            grid.steps
        )));
    }
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.steps + 1);
    out.push(y0);
    let mut y = y0;
    for (n, &dw) in increments.iter().enumerate() {
        let t = grid.time(n);
        let yt = drift_update(sys, t, y, dt);
        y = sys.exact_substep(t, dt, y, yt, dw).map_err(|e| e.at_node(n + 1))?;
        out.push(y);
    }
    Ok(out)
}

/// Largest mismatch of `f1 + f2` against the drift and of `g` against the
/// diffusion over the sample points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDefects {
    pub drift: f64,
    pub diffusion: f64,
}

impl SplitDefects {
    pub fn consistent(&self, tol: f64) -> bool {
        self.drift <= tol && self.diffusion <= tol
    }
}

pub fn check_split_consistency<S: SplitSystem + ?Sized>(sys: &S, points: &[(f64, f64)]) -> SplitDefects {
    points.iter().fold(SplitDefects { drift: 0.0, diffusion: 0.0 }, |acc, &(t, x)| {
        let d = (sys.f1(t, x) + sys.f2(t, x) - sys.drift(t, x)).abs();
        let s = (sys.g(t, x) - sys.diffusion(t, x)).abs();
        SplitDefects { drift: acc.drift.max(d), diffusion: acc.diffusion.max(s) }
    })
}

/// Wright–Fisher instance: `f1 = alpha + beta x`, `f2 = k3^2/4 (1 - 2x)`,
/// `g = k3 sqrt(x(1-x))`; the sub-SDE is solved by `sin^2(k3/2 W + c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WfSplit {
    pub params: WfParams,
}

impl SplitSystem for WfSplit {
    fn f1(&self, _t: f64, x: f64) -> f64 {
        let (alpha, beta) = self.params.alpha_beta();
        alpha + beta * x
    }

    fn f2(&self, _t: f64, x: f64) -> f64 {
        let k3 = self.params.k3();
        k3 * k3 / 4.0 * (1.0 - 2.0 * x)
    }

    fn g(&self, _t: f64, x: f64) -> f64 {
        self.params.k3() * (x * (1.0 - x)).max(0.0).sqrt()
    }

    fn drift(&self, _t: f64, x: f64) -> f64 {
        self.params.drift(x)
    }

    fn diffusion(&self, _t: f64, x: f64) -> f64 {
        self.params.k3() * (x * (1.0 - x)).max(0.0).sqrt()
    }

    fn exact_substep(&self, _t_n: f64, dt: f64, frozen: f64, y_tilde: f64, dw: f64) -> Result<f64> {
        scalar::sd_substep(frozen, y_tilde, dt, self.params.k3(), dw)
    }
}

/// Split system assembled from closures, with the Euler step of `f2, g` as
/// its sub-step. Useful for checking a proposed splitting before writing a
/// closed-form solver.
pub struct EulerSplit<F1, F2, G, D, S> {
    pub f1: F1,
    pub f2: F2,
    pub g: G,
    pub drift: D,
    pub diffusion: S,
}

impl<F1, F2, G, D, S> SplitSystem for EulerSplit<F1, F2, G, D, S>
where
    F1: Fn(f64, f64) -> f64,
    F2: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
    D: Fn(f64, f64) -> f64,
    S: Fn(f64, f64) -> f64,
{
    fn f1(&self, t: f64, x: f64) -> f64 {
        (self.f1)(t, x)
    }
    fn f2(&self, t: f64, x: f64) -> f64 {
        (self.f2)(t, x)
    }
    fn g(&self, t: f64, x: f64) -> f64 {
        (self.g)(t, x)
    }
    fn drift(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }
    fn diffusion(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }
    fn exact_substep(&self, t_n: f64, dt: f64, _frozen: f64, y_tilde: f64, dw: f64) -> Result<f64> {
        Ok(y_tilde + (self.f2)(t_n, y_tilde) * dt + (self.g)(t_n, y_tilde) * dw)
    }
}
