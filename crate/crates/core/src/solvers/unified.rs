use super::{ag_theta, ScheduleParams, SolverState, BREAKDOWN_FACTOR};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq, scale, sub};
use crate::objective::{LinearOperator, ObjectiveModel, QuadraticObjective};

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleOutcome {
    Params(ScheduleParams),
    /// The embedded recurrence has nothing left to do.
    Converged,
}

/// Source of `(θ_k, ν_k, π_k)` for [`unified_step`].
pub trait Schedule {
    fn params(&mut self, obj: &ObjectiveModel, state: &SolverState) -> Result<ScheduleOutcome>;

    /// Lets the schedule record its own scalars on the state it just helped
    /// produce.
    fn annotate(&mut self, _next: &mut SolverState) {}
}

/// Sign conditions `ν_k ≥ θ_k ≥ 0`, `ν_k > 0` for `k ≥ 1`, `π_k > 0`, and
/// `θ₀ = ν₀ = 0`.
pub fn check_param_signs(k: usize, params: &ScheduleParams) -> Result<()> {
    let ScheduleParams { theta, nu, pi, .. } = *params;
    let fail = |reason: String| Err(Error::ScheduleContract { k, reason });
    if !(theta.is_finite() && nu.is_finite() && pi.is_finite()) {
        return fail(format!("non-finite parameters theta={theta}, nu={nu}, pi={pi}"));
    }
    if k == 0 && (theta != 0.0 || nu != 0.0) {
        return fail(format!("first step needs theta = nu = 0, got {theta}, {nu}"));
    }
    if theta < 0.0 {
        return fail(format!("theta = {theta} < 0"));
    }
    if nu < theta {
        return fail(format!("nu = {nu} < theta = {theta}"));
    }
    if k >= 1 && !(nu > 0.0) {
        return fail(format!("nu = {nu} must be positive"));
    }
    if !(pi > 0.0) {
        return fail(format!("pi = {pi} must be positive"));
    }
    Ok(())
}

/// `y = x_k + θ_k s_k`, `x_{k+1} = x_k + ν_k s_k − π_k ∇f(y)`,
/// `s_{k+1} = x_{k+1} − x_k`; at `k = 0` the `s` terms are absent.
pub fn unified_step(
    obj: &ObjectiveModel,
    state: &SolverState,
    params: &ScheduleParams,
) -> Result<SolverState> {
    check_param_signs(state.k, params)?;
    let (y, base) = match (&state.s, state.k) {
        (Some(s), k) if k > 0 => (axpy(&state.x, params.theta, s), axpy(&state.x, params.nu, s)),
        (None, k) if k > 0 => {
            return Err(Error::InvalidInput(format!("state at k = {k} has no displacement")))
        }
        _ => (state.x.clone(), state.x.clone()),
    };
    let g = obj.grad(&y)?;
    let x_next = axpy(&base, -params.pi, &g);
    let s_next = sub(&x_next, &state.x);
    Ok(SolverState {
        k: state.k + 1,
        x: x_next,
        s: Some(s_next),
        y: Some(y),
        grad_y: Some(g),
        step_params: Some(*params),
        ..SolverState::default()
    })
}

/// Accelerated-gradient identification: `θ_k = ν_k = (√L−√ℓ)/(√L+√ℓ)` for
/// `k ≥ 1`, zero at `k = 0`, `π_k = 1/L`, `ρ_{k+1} = √(L/ℓ) − 1`.
///
/// With `L = ℓ` everything but `π` collapses to zero and `degenerate` is set.
pub fn ag_schedule(obj: &ObjectiveModel, k: usize) -> ScheduleParams {
    let (ell, lip) = (obj.ell(), obj.lip());
    if lip == ell {
        return ScheduleParams {
            theta: 0.0,
            nu: 0.0,
            pi: 1.0 / lip,
            rho_next: Some(0.0),
            degenerate: true,
        };
    }
    let theta = if k == 0 { 0.0 } else { ag_theta(ell, lip) };
    ScheduleParams {
        theta,
        nu: theta,
        pi: 1.0 / lip,
        rho_next: Some((lip / ell).sqrt() - 1.0),
        degenerate: false,
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AgSchedule;

impl Schedule for AgSchedule {
    fn params(&mut self, obj: &ObjectiveModel, state: &SolverState) -> Result<ScheduleOutcome> {
        Ok(ScheduleOutcome::Params(ag_schedule(obj, state.k)))
    }
}

/// CG scalars for one step computed by [`cg_schedule`].
#[derive(Clone, Debug, PartialEq)]
pub struct CgScheduleStep {
    pub params: ScheduleParams,
    /// `α_{k+1}`
    pub alpha_next: f64,
    /// `β_{k+1}`
    pub beta_next: f64,
    /// `‖r_k‖²`
    pub res_sq: f64,
    /// `p_{k+1}`
    pub p_next: Vec<f64>,
    /// `p_{k+1}ᵀAp_{k+1}`
    pub p_a_p: f64,
}

/// CG identification `θ_k = 0`, `ν_k = α_{k+1}β_{k+1}/α_k`, `π_k = α_{k+1}`.
///
/// The recurrence is rebuilt from the unified iterate itself: `r_k = −∇f(x_k)`
/// and `p_k = s_k/α_k`, with `α_k` and `‖r_{k−1}‖²` read from the state.
/// Costs one extra matvec for `Ap_{k+1}`. Returns `None` once
/// `‖r_k‖ ≤ breakdown`.
pub fn cg_schedule(
    q: &QuadraticObjective,
    state: &SolverState,
    breakdown: f64,
) -> Result<Option<CgScheduleStep>> {
    let r = q.residual(&state.x)?;
    let res_sq = norm_sq(&r);
    if res_sq <= breakdown * breakdown {
        return Ok(None);
    }
    let (beta, p_next, alpha_prev) = if state.k == 0 {
        (0.0, r, None)
    } else {
        let missing = || Error::InvalidInput(format!("CG schedule state at k = {} is incomplete", state.k));
        let alpha_prev = state.alpha.ok_or_else(missing)?;
        let prev_res_sq = state.prev_res_sq.ok_or_else(missing)?;
        let s = state.s.as_deref().ok_or_else(missing)?;
        let beta = res_sq / prev_res_sq;
        let p_prev = scale(s, 1.0 / alpha_prev);
        (beta, axpy(&r, beta, &p_prev), Some(alpha_prev))
    };
    let p_a_p = dot(&p_next, &q.apply(&p_next));
    if !(p_a_p > 0.0) {
        return Err(Error::NotPositiveDefinite {
            index: state.k,
            value: p_a_p,
        });
    }
    let alpha_next = res_sq / p_a_p;
    let nu = alpha_prev.map_or(0.0, |a| alpha_next * beta / a);
    Ok(Some(CgScheduleStep {
        params: ScheduleParams {
            theta: 0.0,
            nu,
            pi: alpha_next,
            rho_next: None,
            degenerate: false,
        },
        alpha_next,
        beta_next: beta,
        res_sq,
        p_next,
        p_a_p,
    }))
}

/// Stateful wrapper around [`cg_schedule`] for the unified driver.
#[derive(Clone, Debug)]
pub struct CgSchedule<'a> {
    q: &'a QuadraticObjective,
    breakdown: f64,
    pending: Option<CgScheduleStep>,
}

impl<'a> CgSchedule<'a> {
    pub fn new(q: &'a QuadraticObjective, x0: &[f64]) -> Result<Self> {
        let r0 = q.residual(x0)?;
        Ok(Self {
            q,
            breakdown: BREAKDOWN_FACTOR * norm(&r0),
            pending: None,
        })
    }
}

impl Schedule for CgSchedule<'_> {
    fn params(&mut self, _obj: &ObjectiveModel, state: &SolverState) -> Result<ScheduleOutcome> {
        match cg_schedule(self.q, state, self.breakdown)? {
            None => Ok(ScheduleOutcome::Converged),
            Some(step) => {
                let params = step.params;
                self.pending = Some(step);
                Ok(ScheduleOutcome::Params(params))
            }
        }
    }

    fn annotate(&mut self, next: &mut SolverState) {
        if let Some(step) = self.pending.take() {
            next.alpha = Some(step.alpha_next);
            next.beta = Some(step.beta_next);
            next.prev_res_sq = Some(step.res_sq);
            next.p = Some(step.p_next);
            next.p_a_p = Some(step.p_a_p);
        }
    }
}
