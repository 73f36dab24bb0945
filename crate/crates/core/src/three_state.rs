//! Schemes for the three-state system
//!
//! ```text
//! dX1 = (k1_11 + k1_12 X2 - k2_1 X1) dt + k3_11 sqrt(X1 X2) dW1 + k3_12 sqrt(X1 X3) dW2
//! dX2 = (k1_21 + k1_22 X1 - k2_2 X2) dt + k3_21 sqrt(X1 X2) dW1 + k3_23 sqrt(X2 X3) dW3
//! ```
//!
//! with `X3 = 1 - X1 - X2`.

use crate::error::{Error, Result};
use crate::model::MultiCoefficients;
use crate::scalar::{arcsin_sqrt, sin_squared_open, SchemeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexState {
    pub y1: f64,
    pub y2: f64,
}

impl SimplexState {
    pub fn new(y1: f64, y2: f64) -> Self {
        Self { y1, y2 }
    }

    pub fn y3(&self) -> f64 {
        1.0 - self.y1 - self.y2
    }

    pub fn in_open_simplex(&self) -> bool {
        self.y1 > 0.0 && self.y2 > 0.0 && self.y1 + self.y2 < 1.0
    }

    pub fn in_closed_simplex(&self) -> bool {
        self.y1 >= 0.0 && self.y2 >= 0.0 && self.y1 + self.y2 <= 1.0
    }

    /// All three proportions in `[0, 1]`.
    pub fn in_unit_cube(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.y1) && unit(self.y2) && unit(self.y3())
    }

    /// Squared Euclidean distance over `(Y1, Y2, Y3)`.
    pub fn squared_distance(&self, other: &SimplexState) -> f64 {
        let d1 = self.y1 - other.y1;
        let d2 = self.y2 - other.y2;
        let d3 = self.y3() - other.y3();
        d1 * d1 + d2 * d2 + d3 * d3
    }
}

/// Tolerance keeping iterates a fixed distance inside the simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampPolicy {
    epsilon: f64,
}

impl Default for ClampPolicy {
    fn default() -> Self {
        Self { epsilon: 1e-8 }
    }
}

impl ClampPolicy {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon < 0.25 {
            Ok(Self { epsilon })
        } else {
            Err(Error::InvalidParameter(format!("clamp tolerance must lie in (0, 1/4), got {epsilon}")))
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Clamp used around the SD step. A component above `1 - eps` is set to
    /// `1 - eps` and the other to `eps/2`; otherwise, if the third proportion
    /// falls below `eps/2`, the pair is rescaled to sum to `1 - eps`.
    /// Returns the new state and whether anything changed.
    pub fn clamp_sd(&self, s: SimplexState) -> (SimplexState, bool) {
        let eps = self.epsilon;
        if s.y1 > 1.0 - eps {
            return (SimplexState::new(1.0 - eps, eps / 2.0), true);
        }
        if s.y2 > 1.0 - eps {
            return (SimplexState::new(eps / 2.0, 1.0 - eps), true);
        }
        let sum = s.y1 + s.y2;
        if 1.0 - sum < eps / 2.0 {
            let k = (1.0 - eps) / sum;
            return (SimplexState::new(s.y1 * k, s.y2 * k), true);
        }
        (s, false)
    }

    /// Clamp used before each balanced step: components at or below `eps`
    /// are raised to `eps`, then a pair summing to at least `1 - eps` is
    /// rescaled to sum to `1 - eps`.
    pub fn clamp_biss(&self, s: SimplexState) -> (SimplexState, bool) {
        let eps = self.epsilon;
        let mut out = s;
        let mut changed = false;
        if out.y1 <= eps {
            out.y1 = eps;
            changed = true;
        }
        if out.y2 <= eps {
            out.y2 = eps;
            changed = true;
        }
        let sum = out.y1 + out.y2;
        if sum >= 1.0 - eps {
            let k = (1.0 - eps) / sum;
            out = SimplexState::new(out.y1 * k, out.y2 * k);
            changed = true;
        }
        (out, changed)
    }
}

fn check_finite(s: &SimplexState) -> Result<()> {
    for v in [s.y1, s.y2] {
        if !v.is_finite() {
            return Err(Error::Domain { value: v, domain: "finite proportions" });
        }
    }
    Ok(())
}

/// Explicit update `y_n^(i) = Y^(i) + f1^(i)(Y) dt` of the SD scheme, where
/// `f1` is the drift minus the Itô term of the frozen `sin^2` sub-step.
pub fn sd3_drift_update(k: &MultiCoefficients, s: SimplexState, dt: f64) -> Result<[f64; 2]> {
    let SimplexState { y1, y2 } = s;
    let y3 = s.y3();
    let q1 = (k.k3_11 * k.k3_11 * y2 + k.k3_12 * k.k3_12 * y3) / (1.0 - y1);
    let q2 = (k.k3_21 * k.k3_21 * y1 + k.k3_23 * k.k3_23 * y3) / (1.0 - y2);
    let f1 = k.k1_11 + k.k1_12 * y2 - q1 / 4.0 + y1 * (q1 / 2.0 - k.k2_1);
    let f2 = k.k1_21 + k.k1_22 * y1 - q2 / 4.0 + y2 * (q2 / 2.0 - k.k2_2);
    let out = [y1 + f1 * dt, y2 + f2 * dt];
    for (i, &y_tilde) in out.iter().enumerate() {
        if !(y_tilde > 0.0 && y_tilde < 1.0) {
            let y = if i == 0 { y1 } else { y2 };
            return Err(Error::StepSizeViolation { y, y_tilde, dt });
        }
    }
    Ok(out)
}

/// Result of one three-state step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step3 {
    pub state: SimplexState,
    /// Number of clamp corrections applied in this step.
    pub clamps: u32,
    /// The unclamped output left `[0, 1]^3` (EM only).
    pub exited: bool,
}

/// SD step without clamping: closed-form `sin^2` solution of the sub-system
/// with square-root factors frozen at `s`.
pub fn sd3_raw_step(k: &MultiCoefficients, s: SimplexState, dw: [f64; 3], dt: f64) -> Result<SimplexState> {
    let [yn1, yn2] = sd3_drift_update(k, s, dt)?;
    let SimplexState { y1, y2 } = s;
    let y3 = s.y3().max(0.0);
    let phi1 = 0.5 * k.k3_11 * (y2 / (1.0 - y1)).sqrt() * dw[0]
        + 0.5 * k.k3_12 * (y3 / (1.0 - y1)).sqrt() * dw[1]
        + arcsin_sqrt(yn1, 1.0 - yn1);
    let phi2 = 0.5 * k.k3_21 * (y1 / (1.0 - y2)).sqrt() * dw[0]
        + 0.5 * k.k3_23 * (y3 / (1.0 - y2)).sqrt() * dw[2]
        + arcsin_sqrt(yn2, 1.0 - yn2);
    Ok(SimplexState::new(sin_squared_open(phi1), sin_squared_open(phi2)))
}

/// SD step with the clamp applied to the input and to the output.
pub fn sd3_step(
    k: &MultiCoefficients,
    s: SimplexState,
    dw: [f64; 3],
    dt: f64,
    policy: &ClampPolicy,
) -> Result<Step3> {
    check_finite(&s)?;
    if !(s.y1 > 0.0 && s.y2 > 0.0) {
        return Err(Error::Domain { value: s.y1.min(s.y2), domain: "open simplex" });
    }
    let (pre, c0) = policy.clamp_sd(s);
    let raw = sd3_raw_step(k, pre, dw, dt)?;
    let (state, c1) = policy.clamp_sd(raw);
    Ok(Step3 { state, clamps: c0 as u32 + c1 as u32, exited: false })
}

/// Balancing controls `D1, D2, D3` at a clamped state, already scaled by `|dW_i|`.
pub fn biss3_controls(c: [f64; 3], s: SimplexState, dw: [f64; 3], eps: f64) -> [f64; 3] {
    let SimplexState { y1, y2 } = s;
    let y3 = s.y3();
    let d1 = if y1 <= y2 {
        c[0] * ((y2 / y1).sqrt() + (eps / (y1 * y2)).sqrt())
    } else {
        c[0] * ((y3 / y2).sqrt() + (eps / (y1 * y2)).sqrt())
    };
    let d2 = if 2.0 * y1 + y2 < 1.0 {
        c[1] * ((y3 / y1).sqrt() + (eps / (y1 * y3)).sqrt())
    } else {
        c[1] * ((y1 / y3).sqrt() + (eps / (y1 * y3)).sqrt())
    };
    let d3 = if 2.0 * y2 + y1 < 1.0 {
        c[2] * ((y3 / y2).sqrt() + (eps / (y2 * y3)).sqrt())
    } else {
        c[2] * ((y2 / y3).sqrt() + (eps / (y2 * y3)).sqrt())
    };
    [d1 * dw[0].abs(), d2 * dw[1].abs(), d3 * dw[2].abs()]
}

/// Noise increments shared by the balanced and the explicit scheme.
pub fn noise3(k: &MultiCoefficients, s: SimplexState, dw: [f64; 3]) -> [f64; 2] {
    let SimplexState { y1, y2 } = s;
    let y3 = s.y3().max(0.0);
    let c = k.c;
    let shared = c[0] * (y1 * y2).sqrt() * dw[0];
    [
        -shared + c[1] * (y1 * y3).sqrt() * dw[1],
        shared - c[2] * (y2 * y3).sqrt() * dw[2],
    ]
}

/// Balanced step for the noise followed by an Euler step for the drift.
pub fn biss3_step(
    k: &MultiCoefficients,
    s: SimplexState,
    dw: [f64; 3],
    dt: f64,
    policy: &ClampPolicy,
) -> Result<Step3> {
    check_finite(&s)?;
    let (y, clamped) = policy.clamp_biss(s);
    let d = biss3_controls(k.c, y, dw, policy.epsilon());
    let denom = 1.0 + d[0] + d[1] + d[2];
    let noise = noise3(k, y, dw);
    let star = SimplexState::new(y.y1 + noise[0] / denom, y.y2 + noise[1] / denom);
    let a = k.drift(star.y1, star.y2);
    let state = SimplexState::new(star.y1 + a[0] * dt, star.y2 + a[1] * dt);
    Ok(Step3 { state, clamps: clamped as u32, exited: false })
}

/// Euler–Maruyama step.
pub fn em3_step(k: &MultiCoefficients, s: SimplexState, dw: [f64; 3], dt: f64) -> Result<Step3> {
    check_finite(&s)?;
    if !s.in_closed_simplex() {
        return Err(Error::Domain { value: s.y1 + s.y2, domain: "closed simplex" });
    }
    let a = k.drift(s.y1, s.y2);
    let n = noise3(k, s, dw);
    let state = SimplexState::new(s.y1 + a[0] * dt + n[0], s.y2 + a[1] * dt + n[1]);
    Ok(Step3 { state, clamps: 0, exited: !state.in_unit_cube() })
}

/// A three-state scheme bound to its coefficients, step and clamp policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepper3 {
    scheme: SchemeId,
    coeffs: MultiCoefficients,
    dt: f64,
    policy: ClampPolicy,
}

impl Stepper3 {
    pub fn new(scheme: SchemeId, coeffs: MultiCoefficients, dt: f64, policy: ClampPolicy) -> Result<Self> {
        if !scheme.is_three_state() {
            return Err(Error::NotApplicable { scheme, reason: "not a three-state scheme".into() });
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {dt}")));
        }
        Ok(Self { scheme, coeffs, dt, policy })
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn step(&self, s: SimplexState, dw: [f64; 3]) -> Result<Step3> {
        match self.scheme {
            SchemeId::Sd3 => sd3_step(&self.coeffs, s, dw, self.dt, &self.policy),
            SchemeId::Biss3 => biss3_step(&self.coeffs, s, dw, self.dt, &self.policy),
            SchemeId::Em3 => em3_step(&self.coeffs, s, dw, self.dt),
            _ => unreachable!("validated in new"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path3 {
    pub values: Vec<SimplexState>,
    /// First node that left `[0, 1]^3`; the path stops there.
    pub exited_at: Option<usize>,
    pub clamp_events: u64,
}

impl Path3 {
    pub fn terminal(&self) -> SimplexState {
        *self.values.last().expect("paths hold at least the initial value")
    }
}

fn check_increments(increments: [&[f64]; 3]) -> Result<usize> {
    let n = increments[0].len();
    if increments.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter("increment components differ in length".into()));
    }
    Ok(n)
}

pub fn simulate_path3(stepper: &Stepper3, y0: SimplexState, increments: [&[f64]; 3]) -> Result<Path3> {
    let n = check_increments(increments)?;
    let mut values = Vec::with_capacity(n + 1);
    values.push(y0);
    let mut y = y0;
    let mut clamp_events = 0;
    for i in 0..n {
        let dw = [increments[0][i], increments[1][i], increments[2][i]];
        let out = stepper.step(y, dw).map_err(|e| e.at_node(i + 1))?;
        clamp_events += out.clamps as u64;
        values.push(out.state);
        if out.exited {
            return Ok(Path3 { values, exited_at: Some(i + 1), clamp_events });
        }
        y = out.state;
    }
    Ok(Path3 { values, exited_at: None, clamp_events })
}

/// Terminal state, first exit node and clamp count without storing the path.
pub fn simulate_terminal3(
    stepper: &Stepper3,
    y0: SimplexState,
    increments: [&[f64]; 3],
) -> Result<(SimplexState, Option<usize>, u64)> {
    let n = check_increments(increments)?;
    let mut y = y0;
    let mut clamps = 0;
    for i in 0..n {
        let dw = [increments[0][i], increments[1][i], increments[2][i]];
        let out = stepper.step(y, dw).map_err(|e| e.at_node(i + 1))?;
        clamps += out.clamps as u64;
        if out.exited {
            return Ok((out.state, Some(i + 1), clamps));
        }
        y = out.state;
    }
    Ok((y, None, clamps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    fn set_iii() -> (MultiCoefficients, SimplexState) {
        let k = Preset::SetIII.multi_params().unwrap().coefficients().unwrap();
        let [x1, x2] = k.steady_state().unwrap();
        (k, SimplexState::new(x1, x2))
    }

    #[test]
    fn drift_update_identity_at_zero_step() {
        let (k, s) = set_iii();
        let [a, b] = sd3_drift_update(&k, s, 0.0).unwrap();
        assert_eq!((a, b), (s.y1, s.y2));
    }

    #[test]
    fn drift_update_oracle() {
        let (k, s) = set_iii();
        let (x1, x2, x3) = (s.y1, s.y2, s.y3());
        let (c1, c2, c3) = (0.1271f64, 0.1798f64, 0.1291f64);
        let q1 = (c1 * c1 * x2 + c2 * c2 * x3) / (1.0 - x1);
        let q2 = (c1 * c1 * x1 + c3 * c3 * x3) / (1.0 - x2);
        // drift vanishes at the steady state, so only the Itô terms remain
        let e1 = x1 + (-q1 / 4.0 + x1 * q1 / 2.0) / 8.0;
        let e2 = x2 + (-q2 / 4.0 + x2 * q2 / 2.0) / 8.0;
        let [a, b] = sd3_drift_update(&k, s, 0.125).unwrap();
        assert!((a - e1).abs() < 1e-14 && (b - e2).abs() < 1e-14);
    }

    #[test]
    fn sd3_zero_noise_collapse() {
        let (k, s) = set_iii();
        let [a, b] = sd3_drift_update(&k, s, 0.125).unwrap();
        let out = sd3_step(&k, s, [0.0; 3], 0.125, &ClampPolicy::default()).unwrap();
        assert!((out.state.y1 - a).abs() <= 2.0 * f64::EPSILON);
        assert!((out.state.y2 - b).abs() <= 2.0 * f64::EPSILON);
        assert_eq!(out.clamps, 0);
    }

    #[test]
    fn sd3_step_oracle() {
        let (k, s) = set_iii();
        let dw = [0.1, -0.2, 0.05];
        let [a, b] = sd3_drift_update(&k, s, 0.125).unwrap();
        let (x1, x2, x3) = (s.y1, s.y2, s.y3());
        let e1 = (-0.1271 / 2.0 * (x2 / (1.0 - x1)).sqrt() * 0.1 + 0.1798 / 2.0 * (x3 / (1.0 - x1)).sqrt() * -0.2
            + a.sqrt().asin())
        .sin()
        .powi(2);
        let e2 = (0.1271 / 2.0 * (x1 / (1.0 - x2)).sqrt() * 0.1 - 0.1291 / 2.0 * (x3 / (1.0 - x2)).sqrt() * 0.05
            + b.sqrt().asin())
        .sin()
        .powi(2);
        let out = sd3_step(&k, s, dw, 0.125, &ClampPolicy::default()).unwrap();
        assert!((out.state.y1 - e1).abs() < 1e-14);
        assert!((out.state.y2 - e2).abs() < 1e-14);
    }

    #[test]
    fn sd_clamp_rules() {
        let p = ClampPolicy::default();
        let eps = p.epsilon();
        let (s, changed) = p.clamp_sd(SimplexState::new(1.0 - eps / 2.0, 0.0));
        assert!(changed);
        assert_eq!(s, SimplexState::new(1.0 - eps, eps / 2.0));
        let (s, changed) = p.clamp_sd(SimplexState::new(0.6, 0.4));
        assert!(changed);
        assert!((s.y1 + s.y2 - (1.0 - eps)).abs() < 1e-15);
        assert!(s.in_open_simplex());
        let mid = SimplexState::new(0.3, 0.3);
        assert_eq!(p.clamp_sd(mid), (mid, false));
        assert!(ClampPolicy::new(0.25).is_err());
        assert!(ClampPolicy::new(0.0).is_err());
    }

    #[test]
    fn biss_clamp_rules() {
        let p = ClampPolicy::new(0.01).unwrap();
        let (s, c) = p.clamp_biss(SimplexState::new(-0.1, 0.5));
        assert!(c);
        assert_eq!(s, SimplexState::new(0.01, 0.5));
        let (s, c) = p.clamp_biss(SimplexState::new(0.7, 0.3));
        assert!(c);
        assert!((s.y1 + s.y2 - 0.99).abs() < 1e-15);
    }

    #[test]
    fn biss3_zero_noise_is_euler() {
        let (k, _) = set_iii();
        let s = SimplexState::new(0.3, 0.25);
        let out = biss3_step(&k, s, [0.0; 3], 0.125, &ClampPolicy::default()).unwrap();
        let a = k.drift(0.3, 0.25);
        assert_eq!(out.state, SimplexState::new(0.3 + a[0] * 0.125, 0.25 + a[1] * 0.125));
    }

    #[test]
    fn biss3_tie_uses_first_branch() {
        let s = SimplexState::new(0.3, 0.3);
        let eps = 1e-8;
        let d = biss3_controls([1.0, 0.0, 0.0], s, [1.0, 0.0, 0.0], eps);
        let first = 1.0 + (eps / 0.09f64).sqrt();
        assert!((d[0] - first).abs() < 1e-15);
    }

    #[test]
    fn biss3_oracle() {
        let (k, s) = set_iii();
        let dw = [0.1f64, -0.2, 0.05];
        let eps = 1e-8f64;
        let (y1, y2, y3) = (s.y1, s.y2, s.y3());
        let (c1, c2, c3) = (0.1271f64, 0.1798f64, 0.1291f64);
        // y1 > y2, 2 y1 + y2 < 1, 2 y2 + y1 < 1 at the steady state
        let d1 = c1 * ((y3 / y2).sqrt() + (eps / (y1 * y2)).sqrt()) * 0.1;
        let d2 = c2 * ((y3 / y1).sqrt() + (eps / (y1 * y3)).sqrt()) * 0.2;
        let d3 = c3 * ((y3 / y2).sqrt() + (eps / (y2 * y3)).sqrt()) * 0.05;
        let den = 1.0 + d1 + d2 + d3;
        let n1 = -c1 * (y1 * y2).sqrt() * 0.1 + c2 * (y1 * y3).sqrt() * -0.2;
        let n2 = c1 * (y1 * y2).sqrt() * 0.1 - c3 * (y2 * y3).sqrt() * 0.05;
        let (s1, s2) = ((y1 + n1 + y1 * (den - 1.0)) / den, (y2 + n2 + y2 * (den - 1.0)) / den);
        let e1 = s1 + (3.0 - s2 - 7.6 * s1) * 0.125;
        let e2 = s2 + (1.0 + 0.2 * s1 - 5.3 * s2) * 0.125;
        let out = biss3_step(&k, s, dw, 0.125, &ClampPolicy::default()).unwrap();
        assert!((out.state.y1 - e1).abs() < 1e-14, "{} {}", out.state.y1, e1);
        assert!((out.state.y2 - e2).abs() < 1e-14);
    }

    #[test]
    fn em3_behaviour() {
        let (k, s) = set_iii();
        let out = em3_step(&k, s, [0.0; 3], 0.01).unwrap();
        assert!((out.state.y1 - s.y1).abs() < 1e-15 && (out.state.y2 - s.y2).abs() < 1e-15);
        // Y2 = 0 leaves only the dW2 noise in component 1
        let edge = SimplexState::new(0.4, 0.0);
        let a = em3_step(&k, edge, [0.3, 0.0, 0.0], 0.01).unwrap();
        let b = em3_step(&k, edge, [0.0, 0.0, 0.0], 0.01).unwrap();
        assert_eq!(a.state, b.state);
        let out = em3_step(&k, SimplexState::new(0.001, 0.5), [0.0, -50.0, 0.0], 0.01).unwrap();
        assert!(out.exited);
        assert!(em3_step(&k, SimplexState::new(0.7, 0.7), [0.0; 3], 0.01).is_err());
    }

    #[test]
    fn noise_antisymmetry() {
        let (k, s) = set_iii();
        let n = noise3(&k, s, [0.37, 0.0, 0.0]);
        assert_eq!(n[0], -n[1]);
    }

    #[test]
    fn sd3_and_em3_agree_to_first_order() {
        let (k, s) = set_iii();
        let z = [0.8, -1.1, 0.4];
        let diff = |dt: f64| {
            let dw = z.map(|v| v * dt.sqrt());
            let a = sd3_raw_step(&k, s, dw, dt).unwrap();
            let b = em3_step(&k, s, dw, dt).unwrap().state;
            ((a.y1 - b.y1).powi(2) + (a.y2 - b.y2).powi(2)).sqrt()
        };
        let ratio = diff(1.0 / 256.0) / diff(1.0 / 512.0);
        assert!((1.7..=2.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn path_driver_matches_steps() {
        let (k, s) = set_iii();
        let dw = [[0.01], [-0.02], [0.03]];
        for scheme in [SchemeId::Sd3, SchemeId::Biss3, SchemeId::Em3] {
            let st = Stepper3::new(scheme, k, 1.0 / 32.0, ClampPolicy::default()).unwrap();
            let p = simulate_path3(&st, s, [&dw[0], &dw[1], &dw[2]]).unwrap();
            assert_eq!(p.values[1], st.step(s, [0.01, -0.02, 0.03]).unwrap().state);
            let (t, e, _) = simulate_terminal3(&st, s, [&dw[0], &dw[1], &dw[2]]).unwrap();
            assert_eq!((t, e), (p.terminal(), None));
        }
        assert!(Stepper3::new(SchemeId::Sd, k, 0.1, ClampPolicy::default()).is_err());
    }
}
