//! The three iterations: direct accelerated gradient, classic
//! Hestenes-Stiefel conjugate gradient, and the unified three-parameter
//! framework with pluggable schedules. All of them emit the same
//! [`SolverState`] snapshots so the potential engine can treat them alike.

mod ag;
mod cg;
mod extended;
mod unified;

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

pub use ag::{ag_step, ag_theta};
pub use cg::{cg_start, cg_step, CgOutcome, BREAKDOWN_FACTOR};
pub use extended::run_extended_with;
pub use unified::{
    ag_schedule, cg_schedule, check_param_signs, unified_step, AgSchedule, CgSchedule,
    CgScheduleStep, Schedule, ScheduleOutcome,
};

use crate::error::{Error, Result};
use crate::linalg::{norm, sub};
use crate::objective::{LinearOperator, ObjectiveModel, QuadraticObjective};

/// Per-step parameters `(θ_k, ν_k, π_k)` of the unified framework, plus the
/// potential's `ρ_{k+1}` when the schedule fixes it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub theta: f64,
    pub nu: f64,
    pub pi: f64,
    #[serde(default)]
    pub rho_next: Option<f64>,
    /// Set when `L = ℓ` collapses the accelerated schedule to gradient descent.
    #[serde(default)]
    pub degenerate: bool,
}

/// Snapshot after iteration `k`.
///
/// `y`, `grad_y` and `step_params` describe the step that produced this
/// state (so state `k` carries `y_k` and the parameters of step `k−1`);
/// they are absent at `k = 0`. The CG fields follow the Hestenes-Stiefel
/// indexing: `alpha = α_k`, `beta = β_k`, `p = p_k`, `r = r_k`,
/// `prev_res_sq = ‖r_{k−1}‖²`, `p_a_p = p_kᵀAp_k`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub k: usize,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_res_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_a_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_params: Option<ScheduleParams>,
    /// `‖(b − Ax_k) − r_k‖ / ‖r_0‖`, recorded every 10 CG iterations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_drift: Option<f64>,
}

impl SolverState {
    pub fn initial(x0: Vec<f64>) -> Self {
        Self {
            k: 0,
            x: x0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ag,
    CgClassic,
    CgUnified,
    AgUnified,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ag, Method::CgClassic, Method::CgUnified, Method::AgUnified];

    /// Which certificate family the method belongs to.
    pub fn family(self) -> Family {
        match self {
            Method::Ag | Method::AgUnified => Family::Ag,
            Method::CgClassic | Method::CgUnified => Family::Cg,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Ag => "ag",
            Method::CgClassic => "cg",
            Method::CgUnified => "cg-unified",
            Method::AgUnified => "ag-unified",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "ag" => Ok(Method::Ag),
            "cg" | "cg_classic" => Ok(Method::CgClassic),
            "cg_unified" => Ok(Method::CgUnified),
            "ag_unified" => Ok(Method::AgUnified),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

/// Working precision of a run. The wider settings cover the CG methods.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Double,
    /// Double-double, about 106 significant bits.
    Extended,
    /// Binary floating point with this many significant bits.
    Bits(u64),
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precision::Double => f.write_str("double"),
            Precision::Extended => f.write_str("extended"),
            Precision::Bits(bits) => write!(f, "mp{bits}"),
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(Precision::Double),
            "extended" => Ok(Precision::Extended),
            other => match other.strip_prefix("mp").map(str::parse::<u64>) {
                Some(Ok(bits)) if bits >= crate::mpfloat::MpContext::MIN_BITS => {
                    Ok(Precision::Bits(bits))
                }
                _ => Err(Error::InvalidInput(format!(
                    "unknown precision {other:?}; expected double, extended or mp<bits> with at least {} bits",
                    crate::mpfloat::MpContext::MIN_BITS
                ))),
            },
        }
    }
}

/// Algorithm family, which fixes `ρ_k` and the contraction constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ag,
    Cg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Termination {
    MaxIters,
    StopGap,
    /// CG residual fell below the breakdown threshold.
    Converged,
    Failed { k: usize, message: String },
    /// The caller's visitor asked to stop.
    Stopped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub method: Method,
    pub states: Vec<SolverState>,
    pub termination: Termination,
}

/// Runs `method` from `x0` and keeps every snapshot.
///
/// Stops after `max_iters` steps, when `f(x_k) − f* ≤ stop_gap` (minimizer
/// known) or `‖∇f(x_k)‖ ≤ stop_gap·‖∇f(x₀)‖` (otherwise), or when CG
/// converges. A negative `stop_gap` disables the gap test.
pub fn run(
    obj: &ObjectiveModel,
    method: Method,
    x0: &[f64],
    max_iters: usize,
    stop_gap: f64,
) -> Result<Trace> {
    let mut states = Vec::new();
    let termination = run_with(obj, method, x0, max_iters, stop_gap, |s| {
        states.push(s.clone());
        ControlFlow::Continue(())
    })?;
    Ok(Trace {
        method,
        states,
        termination,
    })
}

/// [`run`] at the requested working precision.
pub fn run_in(
    obj: &ObjectiveModel,
    method: Method,
    x0: &[f64],
    max_iters: usize,
    stop_gap: f64,
    precision: Precision,
) -> Result<Trace> {
    let mut states = Vec::new();
    let keep = |s: &SolverState| {
        states.push(s.clone());
        ControlFlow::Continue(())
    };
    let termination = match precision {
        Precision::Double => run_with(obj, method, x0, max_iters, stop_gap, keep)?,
        wide => run_extended_with(obj, method, x0, max_iters, stop_gap, wide, keep)?,
    };
    Ok(Trace {
        method,
        states,
        termination,
    })
}

/// Streaming form of [`run`]: every snapshot is handed to `visit` instead of
/// being stored, and `visit` may end the run early.
pub fn run_with(
    obj: &ObjectiveModel,
    method: Method,
    x0: &[f64],
    max_iters: usize,
    stop_gap: f64,
    visit: impl FnMut(&SolverState) -> ControlFlow<()>,
) -> Result<Termination> {
    if max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be at least 1".into()));
    }
    crate::error::check_dim(obj.dim(), x0.len())?;
    let stop = StopRule::new(obj, x0, stop_gap)?;
    let start = SolverState::initial(x0.to_vec());
    match method {
        Method::Ag => drive(start, max_iters, &stop, visit, |s| ag_step(obj, s).map(Some)),
        Method::CgClassic => {
            let q = require_quadratic(obj)?;
            run_cg_with_operator(q, q, start, max_iters, &stop, visit)
        }
        Method::AgUnified => {
            let mut schedule = AgSchedule;
            drive(start, max_iters, &stop, visit, |s| scheduled_step(obj, &mut schedule, s))
        }
        Method::CgUnified => {
            let mut schedule = CgSchedule::new(require_quadratic(obj)?, x0)?;
            drive(start, max_iters, &stop, visit, |s| scheduled_step(obj, &mut schedule, s))
        }
    }
}

/// Classic CG where every step's single matvec goes through `op`, while the
/// starting residual and the drift diagnostic use the exact objective.
pub fn run_cg_with_operator<O: LinearOperator>(
    q: &QuadraticObjective,
    op: &O,
    start: SolverState,
    max_iters: usize,
    stop: &StopRule<'_>,
    visit: impl FnMut(&SolverState) -> ControlFlow<()>,
) -> Result<Termination> {
    let start = cg_start(q, start.x)?;
    let r0_norm = norm(start.r.as_deref().unwrap_or_default());
    drive(start, max_iters, stop, visit, |s| match cg_step(op, s, r0_norm)? {
        CgOutcome::Converged => Ok(None),
        CgOutcome::Advanced(mut next) => {
            if next.k % 10 == 0 && r0_norm > 0.0 {
                let true_r = q.residual(&next.x)?;
                let rec = next.r.as_deref().unwrap_or_default();
                next.residual_drift = Some(norm(&sub(&true_r, rec)) / r0_norm);
            }
            Ok(Some(next))
        }
    })
}

fn require_quadratic(obj: &ObjectiveModel) -> Result<&QuadraticObjective> {
    obj.as_quadratic()
        .ok_or_else(|| Error::Unsupported("conjugate gradient needs a quadratic objective".into()))
}

fn scheduled_step<S: Schedule>(
    obj: &ObjectiveModel,
    schedule: &mut S,
    state: &SolverState,
) -> Result<Option<SolverState>> {
    match schedule.params(obj, state)? {
        ScheduleOutcome::Converged => Ok(None),
        ScheduleOutcome::Params(params) => {
            let mut next = unified_step(obj, state, &params)?;
            schedule.annotate(&mut next);
            Ok(Some(next))
        }
    }
}

/// When a run may stop early.
#[derive(Clone, Debug)]
pub struct StopRule<'a> {
    obj: &'a ObjectiveModel,
    threshold: f64,
    by_gap: bool,
}

impl<'a> StopRule<'a> {
    pub fn new(obj: &'a ObjectiveModel, x0: &[f64], stop_gap: f64) -> Result<Self> {
        if obj.minimizer().is_some() {
            Ok(Self {
                obj,
                threshold: stop_gap,
                by_gap: true,
            })
        } else {
            Ok(Self {
                obj,
                threshold: stop_gap * norm(&obj.grad(x0)?),
                by_gap: false,
            })
        }
    }

    /// Never stops early.
    pub fn never(obj: &'a ObjectiveModel) -> Self {
        Self {
            obj,
            threshold: -1.0,
            by_gap: false,
        }
    }

    fn reached(&self, state: &SolverState) -> Result<bool> {
        if self.threshold < 0.0 {
            return Ok(false);
        }
        let value = if self.by_gap {
            self.obj.gap(&state.x)?
        } else {
            norm(&self.obj.grad(&state.x)?)
        };
        Ok(value <= self.threshold)
    }
}

fn drive(
    start: SolverState,
    max_iters: usize,
    stop: &StopRule<'_>,
    mut visit: impl FnMut(&SolverState) -> ControlFlow<()>,
    mut step: impl FnMut(&SolverState) -> Result<Option<SolverState>>,
) -> Result<Termination> {
    if visit(&start).is_break() {
        return Ok(Termination::Stopped);
    }
    if stop.reached(&start)? {
        return Ok(Termination::StopGap);
    }
    let mut state = start;
    for _ in 0..max_iters {
        let next = match step(&state) {
            Ok(Some(next)) => next,
            Ok(None) => return Ok(Termination::Converged),
            Err(e) => {
                return Ok(Termination::Failed {
                    k: state.k,
                    message: e.to_string(),
                })
            }
        };
        if visit(&next).is_break() {
            return Ok(Termination::Stopped);
        }
        if stop.reached(&next)? {
            return Ok(Termination::StopGap);
        }
        state = next;
    }
    Ok(Termination::MaxIters)
}
