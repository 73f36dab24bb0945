//! One-step maps for the scalar model: the semi-discrete schemes SD and
//! SD-alt, Euler–Maruyama, the balanced implicit split step (BISS) and the
//! hybrid splitting (HYB).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::WfParams;
use crate::quadrature::GaussHermite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    Sd,
    SdAlt,
    Em,
    Biss,
    Hyb,
    Sd3,
    Biss3,
    Em3,
}

impl SchemeId {
    pub const ALL: [SchemeId; 8] = [
        SchemeId::Sd,
        SchemeId::SdAlt,
        SchemeId::Em,
        SchemeId::Biss,
        SchemeId::Hyb,
        SchemeId::Sd3,
        SchemeId::Biss3,
        SchemeId::Em3,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeId::Sd => "sd",
            SchemeId::SdAlt => "sd-alt",
            SchemeId::Em => "em",
            SchemeId::Biss => "biss",
            SchemeId::Hyb => "hyb",
            SchemeId::Sd3 => "sd3",
            SchemeId::Biss3 => "biss3",
            SchemeId::Em3 => "em3",
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, SchemeId::Sd | SchemeId::SdAlt | SchemeId::Em | SchemeId::Biss | SchemeId::Hyb)
    }

    pub fn is_three_state(&self) -> bool {
        !self.is_scalar()
    }

    /// Schemes whose iterates may leave the state domain.
    pub fn can_exit(&self) -> bool {
        matches!(self, SchemeId::Em | SchemeId::Hyb | SchemeId::Em3)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace('_', "-");
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == t)
            .ok_or_else(|| Error::Parse(format!("unknown scheme '{}'", s.trim())))
    }
}

/// Parses a comma-separated scheme list such as `sd,biss,hyb`.
pub fn parse_scheme_list(s: &str) -> Result<Vec<SchemeId>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let id: SchemeId = part.parse()?;
        if out.contains(&id) {
            return Err(Error::Parse(format!("scheme '{id}' listed twice")));
        }
        out.push(id);
    }
    Ok(out)
}

/// 2^-53; states handed to the inverse trig call are kept this far from 0 and 1.
const TRIG_GUARD: f64 = f64::EPSILON / 2.0;
/// Largest double below one.
pub(crate) const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// `arcsin(sqrt(v))` given `v` and `1 - v`, via `atan2` so that neither
/// end of the interval loses accuracy.
pub(crate) fn arcsin_sqrt(v: f64, one_minus: f64) -> f64 {
    let v = v.clamp(TRIG_GUARD, ONE_BELOW);
    let w = one_minus.clamp(TRIG_GUARD, ONE_BELOW);
    v.sqrt().atan2(w.sqrt())
}

/// `sin^2(phi)` rounded into the open unit interval. The exact value lies in
/// (0, 1); a result that rounds onto an endpoint is replaced by the nearest
/// double inside.
pub(crate) fn sin_squared_open(phi: f64) -> f64 {
    let s = phi.sin();
    let y = s * s;
    if y >= 1.0 {
        ONE_BELOW
    } else if y <= 0.0 {
        f64::MIN_POSITIVE
    } else {
        y
    }
}

/// Step size together with the model and the quantities derived from both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    params: WfParams,
    dt: f64,
    biss_epsilon: f64,
}

impl StepContext {
    pub fn new(params: WfParams, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {dt}")));
        }
        let a = params.k1() * dt;
        let b = (params.k2() - params.k1()) * dt;
        let biss_epsilon = a.min(b).min(1.0 - a).min(1.0 - b);
        Ok(Self { params, dt, biss_epsilon })
    }

    pub fn params(&self) -> &WfParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `min{A dt, B dt, 1 - A dt, 1 - B dt}` with `A = k1`, `B = k2 - k1`.
    pub fn biss_epsilon(&self) -> f64 {
        self.biss_epsilon
    }

    /// Checks the scheme-specific preconditions on parameters and step.
    pub fn validate_for(&self, scheme: SchemeId) -> Result<()> {
        let p = &self.params;
        let (alpha, beta) = p.alpha_beta();
        match scheme {
            SchemeId::Sd | SchemeId::Em => Ok(()),
            SchemeId::SdAlt => {
                let k3sq = p.k3() * p.k3();
                if k3sq >= 2.0 * p.k2() {
                    return Err(Error::PreconditionFailed {
                        scheme,
                        reason: format!("requires k3^2 < 2 k2 (k3^2 = {k3sq}, 2 k2 = {})", 2.0 * p.k2()),
                    });
                }
                if alpha < 0.0 {
                    return Err(Error::PreconditionFailed {
                        scheme,
                        reason: format!("requires alpha = k1 - k3^2/4 >= 0, got {alpha}"),
                    });
                }
                if self.dt >= -1.0 / beta {
                    return Err(Error::PreconditionFailed {
                        scheme,
                        reason: format!("requires dt < -1/beta = {}, got dt = {}", -1.0 / beta, self.dt),
                    });
                }
                Ok(())
            }
            SchemeId::Biss => {
                let eps = self.biss_epsilon;
                if eps > 0.0 && eps < 1.0 {
                    Ok(())
                } else {
                    Err(Error::PreconditionFailed {
                        scheme,
                        reason: format!(
                            "control tolerance min(A dt, B dt, 1 - A dt, 1 - B dt) = {eps} is not in (0, 1)"
                        ),
                    })
                }
            }
            SchemeId::Hyb => {
                // A/(A+B) in (1/(2(N_r-1)), 1 - 1/(2(N_r-1))) with C^2 = 2(A+B)/(N_r-1)
                // reads alpha > 0 and alpha + beta < 0.
                let ratio = p.k1() / p.k2();
                let margin = p.k3() * p.k3() / (4.0 * p.k2());
                if alpha > 0.0 && alpha + beta < 0.0 {
                    Ok(())
                } else {
                    Err(Error::NotApplicable {
                        scheme,
                        reason: format!(
                            "requires A/(A+B) in (1/(2(N_r-1)), 1 - 1/(2(N_r-1))) = ({margin:.6}, {:.6}), got {ratio:.6}",
                            1.0 - margin
                        ),
                    })
                }
            }
            other => Err(Error::NotApplicable { scheme: other, reason: "not a scalar scheme".into() }),
        }
    }
}

/// Value produced by one step plus whether it left the state domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub value: f64,
    pub exited: bool,
}

fn check_closed_unit(y: f64) -> Result<()> {
    if (0.0..=1.0).contains(&y) {
        Ok(())
    } else {
        Err(Error::Domain { value: y, domain: "[0, 1]" })
    }
}

/// Drift-updated value `y + (alpha + beta y) dt` of the SD scheme.
pub fn sd_drift_update(y: f64, ctx: &StepContext) -> f64 {
    let (alpha, beta) = ctx.params.alpha_beta();
    y + (alpha + beta * y) * ctx.dt
}

/// Closed-form SD sub-step `sin^2(k3/2 dW + arcsin(sqrt(y_tilde)))`, after
/// checking that the drift update stayed inside (0, 1).
pub(crate) fn sd_substep(y: f64, y_tilde: f64, dt: f64, k3: f64, dw: f64) -> Result<f64> {
    let one_minus = 1.0 - y_tilde;
    if !(y_tilde > 0.0 && one_minus > 0.0) {
        return Err(Error::StepSizeViolation { y, y_tilde, dt });
    }
    Ok(sin_squared_open(0.5 * k3 * dw + arcsin_sqrt(y_tilde, one_minus)))
}

/// Semi-discrete step.
pub fn sd_step(y: f64, dw: f64, ctx: &StepContext) -> Result<f64> {
    check_closed_unit(y)?;
    sd_substep(y, sd_drift_update(y, ctx), ctx.dt, ctx.params.k3(), dw)
}

/// Drift update of SD-alt, returned as `(y_tilde, 1 - y_tilde)`.
pub fn sd_alt_drift_update(y: f64, ctx: &StepContext) -> (f64, f64) {
    let (alpha, beta) = ctx.params.alpha_beta();
    let dt = ctx.dt;
    let denom = 1.0 + (alpha + beta) * dt;
    let keep = 1.0 + beta * dt;
    ((y * keep + alpha * dt) / denom, (1.0 - y) * keep / denom)
}

/// Semi-discrete step with the perturbed drift update; under its
/// preconditions the update always stays in (0, 1).
pub fn sd_alt_step(y: f64, dw: f64, ctx: &StepContext) -> Result<f64> {
    ctx.validate_for(SchemeId::SdAlt)?;
    check_closed_unit(y)?;
    Ok(sd_alt_unchecked(y, dw, ctx))
}

fn sd_alt_unchecked(y: f64, dw: f64, ctx: &StepContext) -> f64 {
    let (yt, one_minus) = sd_alt_drift_update(y, ctx);
    sin_squared_open(0.5 * ctx.params.k3() * dw + arcsin_sqrt(yt, one_minus))
}

/// Euler–Maruyama step `y + (k1 - k2 y) dt + k3 sqrt(y (1 - y)) dW`.
pub fn em_step(y: f64, dw: f64, ctx: &StepContext) -> Result<StepOutcome> {
    check_closed_unit(y)?;
    let p = &ctx.params;
    let value = y + p.drift(y) * ctx.dt + p.k3() * (y * (1.0 - y)).sqrt() * dw;
    Ok(StepOutcome { value, exited: !(0.0..=1.0).contains(&value) })
}

/// Four-branch control `d1(y)` of the balanced step.
pub fn biss_control(y: f64, c: f64, eps: f64) -> f64 {
    if y < eps || y > 1.0 - eps {
        c * ((1.0 - eps) / eps).sqrt()
    } else if y < 0.5 {
        c * ((1.0 - y) / y).sqrt()
    } else {
        c * (y / (1.0 - y)).sqrt()
    }
}

/// Balanced implicit split step.
pub fn biss_step(y: f64, dw: f64, ctx: &StepContext) -> Result<f64> {
    ctx.validate_for(SchemeId::Biss)?;
    check_closed_unit(y)?;
    Ok(biss_unchecked(y, dw, ctx))
}

fn biss_unchecked(y: f64, dw: f64, ctx: &StepContext) -> f64 {
    let p = &ctx.params;
    let c = p.k3();
    let d = biss_control(y, c, ctx.biss_epsilon);
    let noise = c * (y * (1.0 - y)).sqrt() * dw / (1.0 + d * dw.abs());
    y + p.drift(y) * ctx.dt + noise * (1.0 - p.k2() * ctx.dt)
}

/// Hybrid splitting step: exact flow of the linear drift composed with the
/// `sin^2` noise map.
pub fn hyb_step(y: f64, dw: f64, ctx: &StepContext) -> Result<StepOutcome> {
    ctx.validate_for(SchemeId::Hyb)?;
    check_closed_unit(y)?;
    Ok(hyb_unchecked(y, dw, ctx))
}

fn hyb_unchecked(y: f64, dw: f64, ctx: &StepContext) -> StepOutcome {
    let (alpha, beta) = ctx.params.alpha_beta();
    let bdt = beta * ctx.dt;
    let shift = if beta == 0.0 { alpha * ctx.dt } else { alpha / beta * bdt.exp_m1() };
    let s = (0.5 * ctx.params.k3() * dw + arcsin_sqrt(y, 1.0 - y)).sin();
    let value = shift + bdt.exp() * s * s;
    StepOutcome { value, exited: !(value > 0.0 && value < 1.0) }
}

/// A scalar scheme whose preconditions have been checked once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarStepper {
    scheme: SchemeId,
    ctx: StepContext,
}

impl ScalarStepper {
    pub fn new(scheme: SchemeId, ctx: StepContext) -> Result<Self> {
        if !scheme.is_scalar() {
            return Err(Error::NotApplicable { scheme, reason: "not a scalar scheme".into() });
        }
        ctx.validate_for(scheme)?;
        Ok(Self { scheme, ctx })
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn context(&self) -> &StepContext {
        &self.ctx
    }

    pub fn step(&self, y: f64, dw: f64) -> Result<StepOutcome> {
        check_closed_unit(y)?;
        let ctx = &self.ctx;
        let inside = |value: f64| StepOutcome { value, exited: false };
        match self.scheme {
            SchemeId::Sd => sd_step(y, dw, ctx).map(inside),
            SchemeId::SdAlt => Ok(inside(sd_alt_unchecked(y, dw, ctx))),
            SchemeId::Em => em_step(y, dw, ctx),
            SchemeId::Biss => {
                let value = biss_unchecked(y, dw, ctx);
                if (0.0..=1.0).contains(&value) {
                    Ok(inside(value))
                } else {
                    Err(Error::ExitedDomain { scheme: SchemeId::Biss, node: 0, value })
                }
            }
            SchemeId::Hyb => Ok(hyb_unchecked(y, dw, ctx)),
            _ => unreachable!("validated in new"),
        }
    }
}

/// Node values of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPath {
    /// `y(t_0), y(t_1), ...`; cut after the first exited node when the scheme left the domain.
    pub values: Vec<f64>,
    /// Index of the first node outside the domain (EM and HYB only).
    pub exited_at: Option<usize>,
}

impl ScalarPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths hold at least the initial value")
    }
}

/// Runs `scheme` from `y0` with one step per increment.
pub fn simulate_path(scheme: SchemeId, ctx: &StepContext, y0: f64, increments: &[f64]) -> Result<ScalarPath> {
    let stepper = ScalarStepper::new(scheme, *ctx)?;
    simulate_with(&stepper, y0, increments)
}

pub fn simulate_with(stepper: &ScalarStepper, y0: f64, increments: &[f64]) -> Result<ScalarPath> {
    check_closed_unit(y0)?;
    let mut values = Vec::with_capacity(increments.len() + 1);
    values.push(y0);
    let mut y = y0;
    for (n, &dw) in increments.iter().enumerate() {
        let out = stepper.step(y, dw).map_err(|e| match e {
            Error::ExitedDomain { scheme, value, .. } => Error::ExitedDomain { scheme, node: n + 1, value },
            other => other.at_node(n + 1),
        })?;
        values.push(out.value);
        if out.exited {
            return Ok(ScalarPath { values, exited_at: Some(n + 1) });
        }
        y = out.value;
    }
    Ok(ScalarPath { values, exited_at: None })
}

/// Terminal value only; same arithmetic as [`simulate_with`] without storing the path.
pub fn simulate_terminal(stepper: &ScalarStepper, y0: f64, increments: &[f64]) -> Result<(f64, Option<usize>)> {
    check_closed_unit(y0)?;
    let mut y = y0;
    for (n, &dw) in increments.iter().enumerate() {
        let out = stepper.step(y, dw).map_err(|e| match e {
            Error::ExitedDomain { scheme, value, .. } => Error::ExitedDomain { scheme, node: n + 1, value },
            other => other.at_node(n + 1),
        })?;
        if out.exited {
            return Ok((out.value, Some(n + 1)));
        }
        y = out.value;
    }
    Ok((y, None))
}

/// One rung of the Itô-consistency probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItoLevel {
    pub dt: f64,
    /// `E[y_dt] - y_tilde`
    pub mean_defect: f64,
    /// `mean_defect - (k3^2/4)(1 - 2 y_tilde) dt`
    pub mean_remainder: f64,
    pub variance: f64,
    /// `variance - k3^2 y_tilde (1 - y_tilde) dt`
    pub variance_remainder: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoProbeReport {
    pub levels: Vec<ItoLevel>,
    /// Remainder ratios between consecutive rungs; about 4 for an O(dt^2) remainder.
    pub mean_ratios: Vec<f64>,
    pub variance_ratios: Vec<f64>,
}

pub const ITO_PROBE_DTS: [f64; 3] = [1.0 / 256.0, 1.0 / 512.0, 1.0 / 1024.0];

/// Checks that one SD sub-step from `y_tilde` has the drift and diffusion of
/// the sub-SDE `dy = k3^2/4 (1 - 2y) dt + k3 sqrt(y(1-y)) dW` up to O(dt^2),
/// by Gauss–Hermite quadrature over `dW ~ N(0, dt)`.
pub fn ito_consistency_probe(params: &WfParams, y_tilde: f64) -> Result<ItoProbeReport> {
    if !(y_tilde > 0.0 && y_tilde < 1.0) {
        return Err(Error::Domain { value: y_tilde, domain: "(0, 1)" });
    }
    let gh = GaussHermite::new(48);
    let k3 = params.k3();
    let theta = arcsin_sqrt(y_tilde, 1.0 - y_tilde);
    let levels: Vec<ItoLevel> = ITO_PROBE_DTS
        .iter()
        .map(|&dt| {
            let h = 0.5 * k3 * dt.sqrt();
            // sin^2(theta + u) - sin^2(theta) = sin(u) sin(2 theta + u)
            let shift = |z: f64| (h * z).sin() * (2.0 * theta + h * z).sin();
            let mean_defect = gh.expect_standard_normal(shift);
            let variance = gh.expect_standard_normal(|z| (shift(z) - mean_defect).powi(2));
            ItoLevel {
                dt,
                mean_defect,
                mean_remainder: mean_defect - k3 * k3 / 4.0 * (1.0 - 2.0 * y_tilde) * dt,
                variance,
                variance_remainder: variance - k3 * k3 * y_tilde * (1.0 - y_tilde) * dt,
            }
        })
        .collect();
    let ratios = |f: fn(&ItoLevel) -> f64| levels.windows(2).map(|w| f(&w[0]) / f(&w[1])).collect();
    Ok(ItoProbeReport {
        mean_ratios: ratios(|l| l.mean_remainder),
        variance_ratios: ratios(|l| l.variance_remainder),
        levels,
    })
}
