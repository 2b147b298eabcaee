use super::{ScheduleParams, SolverState};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm_sq, sub};
use crate::objective::{LinearOperator, QuadraticObjective};

/// CG stops once `‖r_k‖ ≤ BREAKDOWN_FACTOR·‖r₀‖`.
pub const BREAKDOWN_FACTOR: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub enum CgOutcome {
    Advanced(SolverState),
    /// Residual below the breakdown threshold; no step was taken.
    Converged,
}

/// State at `k = 0` with `r₀ = b − Ax₀`.
pub fn cg_start(obj: &QuadraticObjective, x0: Vec<f64>) -> Result<SolverState> {
    let r = obj.residual(&x0)?;
    Ok(SolverState {
        r: Some(r),
        ..SolverState::initial(x0)
    })
}

/// One Hestenes-Stiefel step using exactly one application of `op`.
pub fn cg_step<O: LinearOperator>(op: &O, state: &SolverState, r0_norm: f64) -> Result<CgOutcome> {
    let r = state
        .r
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("CG state is missing its residual".into()))?;
    let res_sq = norm_sq(r);
    let threshold = BREAKDOWN_FACTOR * r0_norm;
    if res_sq <= threshold * threshold {
        return Ok(CgOutcome::Converged);
    }
    let (beta, p) = match (state.k, &state.p, state.prev_res_sq) {
        (0, _, _) => (0.0, r.to_vec()),
        (_, Some(p_prev), Some(prev_res_sq)) => {
            let beta = res_sq / prev_res_sq;
            (beta, axpy(r, beta, p_prev))
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "CG state at k = {} lacks its direction or previous residual",
                state.k
            )))
        }
    };
    let ap = op.apply(&p);
    let p_a_p = dot(&p, &ap);
    if !(p_a_p > 0.0) {
        return Err(Error::NotPositiveDefinite {
            index: state.k,
            value: p_a_p,
        });
    }
    let alpha = res_sq / p_a_p;
    let x_next = axpy(&state.x, alpha, &p);
    let r_next = axpy(r, -alpha, &ap);
    // ν_k = α_{k+1}β_{k+1}/α_k and π_k = α_{k+1} identify this step with the
    // unified framework.
    let nu = match state.alpha {
        Some(alpha_prev) if state.k > 0 => alpha * beta / alpha_prev,
        _ => 0.0,
    };
    Ok(CgOutcome::Advanced(SolverState {
        k: state.k + 1,
        s: Some(sub(&x_next, &state.x)),
        x: x_next,
        y: Some(state.x.clone()),
        r: Some(r_next),
        p: Some(p),
        alpha: Some(alpha),
        beta: Some(beta),
        prev_res_sq: Some(res_sq),
        p_a_p: Some(p_a_p),
        step_params: Some(ScheduleParams {
            theta: 0.0,
            nu,
            pi: alpha,
            rho_next: None,
            degenerate: false,
        }),
        ..SolverState::default()
    }))
}
