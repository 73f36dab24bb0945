//! Wright–Fisher model coefficients, parameter presets and boundary
//! classification through the scale function.
//!
//! The scalar model is
//!
//! ```text
//! dx = (k1 - k2 x) dt + k3 sqrt(x (1 - x)) dW,   x in (0, 1)
//! ```
//!
//! and the three-state system evolves the proportions `(X1, X2)` of states
//! one and two with `X3 = 1 - X1 - X2`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::scalar::SchemeId;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Coefficients `(k1, k2, k3)` of the scalar model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WfParams {
    k1: f64,
    k2: f64,
    k3: f64,
}

impl WfParams {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        check_positive("k1", k1)?;
        check_positive("k2", k2)?;
        check_positive("k3", k3)?;
        Ok(Self { k1, k2, k3 })
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn k3(&self) -> f64 {
        self.k3
    }

    /// `alpha = k1 - k3^2 / 4`, the constant part of the frozen drift.
    pub fn alpha(&self) -> f64 {
        self.k1 - self.k3 * self.k3 / 4.0
    }

    /// `beta = k3^2 / 2 - k2`, the linear part of the frozen drift.
    pub fn beta(&self) -> f64 {
        self.k3 * self.k3 / 2.0 - self.k2
    }

    pub fn alpha_beta(&self) -> (f64, f64) {
        (self.alpha(), self.beta())
    }

    pub fn drift(&self, x: f64) -> f64 {
        self.k1 - self.k2 * x
    }

    pub fn diffusion(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain { value: x, domain: "[0, 1]" });
        }
        Ok(self.k3 * (x * (1.0 - x)).sqrt())
    }

    /// Exponent `2 k1 / k3^2` of the scale density's singularity at 0.
    pub fn left_exponent(&self) -> f64 {
        2.0 * self.k1 / (self.k3 * self.k3)
    }

    /// Exponent `2 (k2 - k1) / k3^2` of the scale density's singularity at 1.
    pub fn right_exponent(&self) -> f64 {
        2.0 * (self.k2 - self.k1) / (self.k3 * self.k3)
    }

    /// Unnormalised scale density `y^(-2k1/k3^2) (1-y)^(2(k1-k2)/k3^2)`
    /// (base point 1/2, multiplicative constant 1).
    pub fn scale_density(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::Domain { value: y, domain: "(0, 1)" });
        }
        Ok(self.log_scale_density(y).exp())
    }

    fn log_scale_density(&self, y: f64) -> f64 {
        -self.left_exponent() * y.ln() - self.right_exponent() * (-y).ln_1p()
    }
}

/// Two-state ion channel rates: opening rate `A`, closing rate `B` and the
/// number of channels `N_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRates {
    pub opening: f64,
    pub closing: f64,
    pub channels: u32,
}

impl ChannelRates {
    pub fn new(opening: f64, closing: f64, channels: u32) -> Result<Self> {
        check_positive("opening rate A", opening)?;
        check_positive("closing rate B", closing)?;
        if channels < 2 {
            return Err(Error::InvalidParameter(format!(
                "channel count N_r must be at least 2, got {channels}"
            )));
        }
        Ok(Self { opening, closing, channels })
    }

    /// Maps to `k1 = A`, `k2 = A + B`, `k3 = sqrt(2 k2 / (N_r - 1))` and the
    /// deterministic steady state `x0 = A / (A + B)`.
    pub fn to_params(&self) -> Result<(WfParams, f64)> {
        let rates = Self::new(self.opening, self.closing, self.channels)?;
        let k2 = rates.opening + rates.closing;
        let k3 = (2.0 * k2 / f64::from(rates.channels - 1)).sqrt();
        Ok((WfParams::new(rates.opening, k2, k3)?, rates.opening / k2))
    }
}

pub fn from_channel_rates(rates: ChannelRates) -> Result<(WfParams, f64)> {
    rates.to_params()
}

/// Raw rates of the three-state system: `A1..A3`, `B1..B3`, `C1..C3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiWfParams {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub c: [f64; 3],
}

/// Coefficients of the three-state system after the rate mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiCoefficients {
    pub k1_11: f64,
    pub k1_12: f64,
    pub k1_21: f64,
    pub k1_22: f64,
    pub k2_1: f64,
    pub k2_2: f64,
    pub k3_11: f64,
    pub k3_12: f64,
    pub k3_21: f64,
    pub k3_23: f64,
    /// Noise amplitudes `C1..C3`, used by the balanced controls.
    pub c: [f64; 3],
}

impl MultiWfParams {
    pub fn new(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Result<Self> {
        for (i, v) in a.iter().enumerate() {
            check_positive(&format!("A{}", i + 1), *v)?;
        }
        for (i, v) in b.iter().enumerate() {
            check_positive(&format!("B{}", i + 1), *v)?;
        }
        for (i, v) in c.iter().enumerate() {
            check_positive(&format!("C{}", i + 1), *v)?;
        }
        Ok(Self { a, b, c })
    }

    pub fn coefficients(&self) -> Result<MultiCoefficients> {
        let p = Self::new(self.a, self.b, self.c)?;
        let [a1, a2, a3] = p.a;
        let [b1, b2, b3] = p.b;
        let [c1, c2, c3] = p.c;
        Ok(MultiCoefficients {
            k1_11: a3,
            k1_12: a2 - a3,
            k1_21: a1,
            k1_22: b1 - a1,
            k2_1: b3 + b1 + a3,
            k2_2: a2 + b2 + a1,
            k3_11: -c1,
            k3_12: c2,
            k3_21: c1,
            k3_23: -c3,
            c: p.c,
        })
    }
}

pub fn multi_from_rates(raw: &MultiWfParams) -> Result<MultiCoefficients> {
    raw.coefficients()
}

impl MultiCoefficients {
    /// Drift `(a1, a2)` of the first two proportions.
    pub fn drift(&self, x1: f64, x2: f64) -> [f64; 2] {
        [
            self.k1_11 + self.k1_12 * x2 - self.k2_1 * x1,
            self.k1_21 + self.k1_22 * x1 - self.k2_2 * x2,
        ]
    }

    /// Zero of the drift, the deterministic steady state `(X1, X2)`.
    pub fn steady_state(&self) -> Result<[f64; 2]> {
        // [-k2_1  k1_12] [x1]   [-k1_11]
        // [k1_22  -k2_2] [x2] = [-k1_21]
        let det = self.k2_1 * self.k2_2 - self.k1_12 * self.k1_22;
        let scale = (self.k2_1 * self.k2_2).abs().max((self.k1_12 * self.k1_22).abs());
        if !(det.abs() > 1e-14 * scale) {
            return Err(Error::SingularSystem { determinant: det });
        }
        let x1 = (self.k1_11 * self.k2_2 + self.k1_12 * self.k1_21) / det;
        let x2 = (self.k2_1 * self.k1_21 + self.k1_22 * self.k1_11) / det;
        Ok([x1, x2])
    }

    /// Scalar Wright–Fisher models obtained by freezing the other proportion
    /// at `state`, one per component. The diffusion of component `i` then
    /// reads `k3_eff sqrt(X_i (1 - X_i))` with the frozen factor used by the
    /// semi-discrete three-state scheme.
    pub fn frozen_margins(&self, state: [f64; 2]) -> Result<[WfParams; 2]> {
        let [x1, x2] = state;
        let x3 = 1.0 - x1 - x2;
        let q1 = (self.k3_11.powi(2) * x2 + self.k3_12.powi(2) * x3) / (1.0 - x1);
        let q2 = (self.k3_21.powi(2) * x1 + self.k3_23.powi(2) * x3) / (1.0 - x2);
        Ok([
            WfParams::new(self.k1_11 + self.k1_12 * x2, self.k2_1, q1.sqrt())?,
            WfParams::new(self.k1_21 + self.k1_22 * x1, self.k2_2, q2.sqrt())?,
        ])
    }
}

/// Built-in parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    SetI,
    SetII,
    SetIII,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::SetI, Preset::SetII, Preset::SetIII];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::SetI => "set-i",
            Preset::SetII => "set-ii",
            Preset::SetIII => "set-iii",
        }
    }

    /// Channel rates of the scalar presets; `None` for the three-state set.
    pub fn channel_rates(&self) -> Option<ChannelRates> {
        match self {
            Preset::SetI => Some(ChannelRates { opening: 1.0, closing: 2.0, channels: 100 }),
            Preset::SetII => Some(ChannelRates { opening: 7.0064, closing: 0.0204, channels: 100 }),
            Preset::SetIII => None,
        }
    }

    pub fn multi_params(&self) -> Option<MultiWfParams> {
        match self {
            Preset::SetIII => Some(MultiWfParams {
                a: [1.0, 2.0, 3.0],
                b: [1.2, 2.3, 3.4],
                c: [0.1271, 0.1798, 0.1291],
            }),
            _ => None,
        }
    }

    /// Scalar parameters and steady-state initial value.
    pub fn scalar(&self) -> Option<(WfParams, f64)> {
        self.channel_rates().map(|r| r.to_params().expect("preset rates are valid"))
    }

    pub fn is_scalar(&self) -> bool {
        !matches!(self, Preset::SetIII)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "set-i" | "i" | "1" => Ok(Preset::SetI),
            "set-ii" | "ii" | "2" => Ok(Preset::SetII),
            "set-iii" | "iii" | "3" => Ok(Preset::SetIII),
            other => Err(Error::Parse(format!(
                "unknown preset '{other}' (expected set-i, set-ii or set-iii)"
            ))),
        }
    }
}

/// Quadrature evidence about one endpoint of the scale function.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceProbe {
    /// `(delta, ln of the partial scale integral from delta to 1/2)` along
    /// the ladder `delta = 2^-5 .. 2^-20` (mirrored for the right endpoint).
    pub ladder: Vec<(f64, f64)>,
    /// Singularity exponent implied by how fast successive ladder pieces grow.
    pub estimated_exponent: f64,
    pub divergent: bool,
}

/// Endpoint attainability of the scalar model.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub left_exponent: f64,
    pub right_exponent: f64,
    pub left_unattainable: bool,
    pub right_unattainable: bool,
    pub left_probe: DivergenceProbe,
    pub right_probe: DivergenceProbe,
}

impl BoundaryReport {
    /// Whether the quadrature probe reached the exponent-test verdict at both ends.
    pub fn probe_agrees(&self) -> bool {
        self.left_probe.divergent == self.left_unattainable
            && self.right_probe.divergent == self.right_unattainable
    }
}

const LADDER_FIRST: i32 = 5;
const LADDER_LAST: i32 = 20;
/// Estimated exponents at or above `1 - PROBE_MARGIN` count as divergent.
const PROBE_MARGIN: f64 = 0.02;

/// Probes `int_delta^{1/2} y^(-a) (1-y)^b dy` along the delta ladder.
///
/// Everything is carried in log space: with exponents near 100 the
/// integrand overflows long before `delta = 2^-20`.
pub fn probe_singular_integral(a: f64, b: f64) -> DivergenceProbe {
    let log_f = |y: f64| -a * y.ln() + b * (-y).ln_1p();
    // ln s' is convex on (0, 1), so its maximum on a piece sits at an end.
    let log_piece = |lo: f64, hi: f64| {
        let peak = log_f(lo).max(log_f(hi));
        let scaled = |y: f64| (log_f(y) - peak).exp();
        let j = adaptive_simpson(&scaled, lo, hi, 1e-13 * (hi - lo));
        peak + j.ln()
    };

    let mut ladder = Vec::new();
    let mut pieces = Vec::new();
    let top = 2f64.powi(-LADDER_FIRST);
    let mut log_total = log_piece(top, 0.5);
    ladder.push((top, log_total));
    for i in LADDER_FIRST..LADDER_LAST {
        let hi = 2f64.powi(-i);
        let lo = 0.5 * hi;
        let lp = log_piece(lo, hi);
        pieces.push(lp);
        let m = log_total.max(lp);
        log_total = m + ((log_total - m).exp() + (lp - m).exp()).ln();
        ladder.push((lo, log_total));
    }

    // Successive pieces scale by 2^(a-1) near the singularity.
    let n = pieces.len();
    let growth = (pieces[n - 1] - pieces[n - 4]) / 3.0 / std::f64::consts::LN_2;
    let estimated_exponent = 1.0 + growth;
    DivergenceProbe { ladder, estimated_exponent, divergent: estimated_exponent >= 1.0 - PROBE_MARGIN }
}

/// Classifies both endpoints by the divergence of the scale function,
/// cross-checked by a quadrature probe.
pub fn classify_boundaries(p: &WfParams) -> BoundaryReport {
    let left = p.left_exponent();
    let right = p.right_exponent();
    // density ~ y^-left (1-y)^-right; mirror y -> 1-y for the right end.
    let left_probe = probe_singular_integral(left, -right);
    let right_probe = probe_singular_integral(right, -left);
    BoundaryReport {
        left_exponent: left,
        right_exponent: right,
        left_unattainable: left >= 1.0,
        right_unattainable: right >= 1.0,
        left_probe,
        right_probe,
    }
}

/// Supremum of step sizes for which the drift update of the given
/// semi-discrete scheme maps every state of (0, 1) into (0, 1).
///
/// For SD the update `y (1 + beta dt) + alpha dt` is affine in `y`, so the
/// endpoint values `alpha dt` and `1 + (alpha + beta) dt` decide; for SET I
/// that is about 0.5038. The per-step check in the scheme stays authoritative.
pub fn max_stable_step(p: &WfParams, scheme: SchemeId) -> Result<f64> {
    let (alpha, beta) = p.alpha_beta();
    match scheme {
        SchemeId::Sd => {
            if alpha < 0.0 {
                return Err(Error::PreconditionFailed {
                    scheme,
                    reason: format!("alpha = {alpha} < 0: small states are pushed below 0 for every step"),
                });
            }
            let slope_end = alpha + beta;
            if slope_end > 0.0 {
                return Err(Error::PreconditionFailed {
                    scheme,
                    reason: format!("alpha + beta = {slope_end} > 0: states near 1 are pushed above 1 for every step"),
                });
            }
            let mut bound = f64::INFINITY;
            if alpha > 0.0 {
                bound = bound.min(1.0 / alpha);
            }
            if slope_end < 0.0 {
                bound = bound.min(-1.0 / slope_end);
            }
            Ok(bound)
        }
        SchemeId::SdAlt => {
            let k3sq = p.k3() * p.k3();
            if k3sq >= 2.0 * p.k2() {
                return Err(Error::PreconditionFailed {
                    scheme,
                    reason: format!("requires k3^2 < 2 k2, got k3^2 = {k3sq}, 2 k2 = {}", 2.0 * p.k2()),
                });
            }
            if alpha < 0.0 {
                return Err(Error::PreconditionFailed {
                    scheme,
                    reason: format!("requires alpha = k1 - k3^2/4 >= 0, got {alpha}"),
                });
            }
            Ok(-1.0 / beta)
        }
        other => Err(Error::NotApplicable {
            scheme: other,
            reason: "no analytic step bound for this scheme".into(),
        }),
    }
}
