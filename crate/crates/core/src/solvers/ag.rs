use super::{ScheduleParams, SolverState};
use crate::error::Result;
use crate::linalg::{axpy, scale, sub};
use crate::objective::ObjectiveModel;

/// Momentum `(√L − √ℓ)/(√L + √ℓ)` used for every step after the first.
pub fn ag_theta(ell: f64, lip: f64) -> f64 {
    let (sl, sh) = (ell.sqrt(), lip.sqrt());
    (sh - sl) / (sh + sl)
}

/// One accelerated gradient step:
/// `y = x_k + θ_k s_k`, `x_{k+1} = y − ∇f(y)/L`, `s_{k+1} = x_{k+1} − x_k`.
pub fn ag_step(obj: &ObjectiveModel, state: &SolverState) -> Result<SolverState> {
    let lip = obj.lip();
    let theta = match (&state.s, state.k) {
        (Some(_), k) if k > 0 => ag_theta(obj.ell(), lip),
        _ => 0.0,
    };
    let y = match &state.s {
        Some(s) if theta != 0.0 => axpy(&state.x, theta, s),
        _ => state.x.clone(),
    };
    let g = obj.grad(&y)?;
    let x_next = sub(&y, &scale(&g, 1.0 / lip));
    let s_next = sub(&x_next, &state.x);
    Ok(SolverState {
        k: state.k + 1,
        x: x_next,
        s: Some(s_next),
        y: Some(y),
        grad_y: Some(g),
        step_params: Some(ScheduleParams {
            theta,
            nu: theta,
            pi: 1.0 / lip,
            rho_next: None,
            degenerate: lip == obj.ell(),
        }),
        ..SolverState::default()
    })
}
