//! Hestenes-Stiefel identity battery for CG traces and the optimality check
//! on the CG choice of `ρ_k`.
//!
//! Left-hand sides that are differences of nearby quantities are evaluated
//! in factored form, e.g. `F_k − F_{k+1} = −s_{k+1}ᵀA(e_k + e_{k+1})`.

use serde::{Deserialize, Serialize};

use super::rho_cg;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{add, axpy, dot, norm, norm_sq, scale, sub};
use crate::objective::{ObjectiveModel, QuadraticObjective};
use crate::quadratic_gen::GroundTruth;
use crate::solvers::SolverState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityTolerances {
    /// Relative tolerance on identities (a)-(d).
    pub relative: f64,
    /// Absolute slack on inequality (e).
    pub inequality_slack: f64,
    pub prorth: f64,
    pub alpha_rq: f64,
    pub conjugacy: f64,
    /// Steps with `F_k ≤ gap_floor·F_0` are past convergence and only (e)
    /// is checked there.
    pub gap_floor: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        Self {
            relative: 1e-8,
            inequality_slack: 1e-10,
            prorth: 1e-10,
            alpha_rq: 1e-9,
            conjugacy: 1e-8,
            gap_floor: 1e-10,
        }
    }
}

impl IdentityTolerances {
    pub fn with_relative(relative: f64) -> Self {
        Self {
            relative,
            ..Self::default()
        }
    }
}

/// `lhs = rhs` with `residual = |lhs − rhs| / max(|lhs|, |rhs|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub pass: bool,
}

impl IdentityCheck {
    fn relative(lhs: f64, rhs: f64, tol: f64) -> Self {
        let scale = lhs.abs().max(rhs.abs());
        let residual = if scale == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / scale
        };
        Self {
            lhs,
            rhs,
            residual,
            pass: residual <= tol,
        }
    }

    /// `|value| ≤ bound`; the residual is `|value| / bound`.
    fn bounded(value: f64, bound: f64) -> Self {
        let residual = if bound > 0.0 {
            value.abs() / bound
        } else if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            lhs: value,
            rhs: bound,
            residual,
            pass: value.abs() <= bound,
        }
    }
}

/// `value ≤ bound` with `slack = bound − value`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub value: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityStep {
    pub k: usize,
    /// `F_k − F_{k+1} = α_{k+1}‖r_k‖²`
    pub a: Option<IdentityCheck>,
    /// `‖e_k‖² − ‖e_{k+1}‖² = (F_k + F_{k+1})‖p_{k+1}‖²/(p_{k+1}ᵀAp_{k+1})`
    pub b: Option<IdentityCheck>,
    /// `‖e_k‖² − ‖e_k + ρ_k s_k‖² = F_k²‖p_k‖²/‖r_{k−1}‖⁴`
    pub c: Option<IdentityCheck>,
    /// `‖w_{k+1}‖² − ‖w_k‖² = −F_k²/‖r_k‖²`
    pub d: Option<IdentityCheck>,
    /// `‖w_k‖² ≤ F_k/ℓ`
    pub e: InequalityCheck,
    /// `p_{k+1}ᵀr_{k+1} = 0`
    pub prorth: Option<IdentityCheck>,
    /// `λ_min ≤ 1/α_{k+1} ≤ λ_max`
    pub alpha_rq: Option<InequalityCheck>,
    /// `p_kᵀAp_{k+1} = 0`
    pub conjugacy: Option<IdentityCheck>,
}

impl IdentityStep {
    fn checks(&self) -> impl Iterator<Item = &IdentityCheck> {
        [self.a.as_ref(), self.b.as_ref(), self.c.as_ref(), self.d.as_ref()]
            .into_iter()
            .flatten()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityCounts {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
    pub e: usize,
    pub prorth: usize,
    pub alpha_rq: usize,
    pub conjugacy: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub tolerances: IdentityTolerances,
    pub steps: Vec<IdentityStep>,
    pub failures: IdentityCounts,
    /// Largest relative residual over (a)-(d).
    pub max_residual: f64,
    /// Most negative slack of (e).
    pub min_slack: f64,
    /// Steps past the gap floor.
    pub converged_steps: usize,
}

impl IdentityReport {
    /// (a)-(e), prorth and alphaRQ all hold. Conjugacy is reported but not
    /// part of the verdict.
    pub fn passed(&self) -> bool {
        let f = &self.failures;
        f.a + f.b + f.c + f.d + f.e + f.prorth + f.alpha_rq == 0
    }
}

struct CgFields<'s> {
    alpha: f64,
    prev_res_sq: f64,
    p: &'s [f64],
    p_a_p: f64,
    s: &'s [f64],
}

fn cg_fields(state: &SolverState) -> Result<CgFields<'_>> {
    match (
        state.alpha,
        state.prev_res_sq,
        state.p.as_deref(),
        state.p_a_p,
        state.s.as_deref(),
    ) {
        (Some(alpha), Some(prev_res_sq), Some(p), Some(p_a_p), Some(s)) => Ok(CgFields {
            alpha,
            prev_res_sq,
            p,
            p_a_p,
            s,
        }),
        _ => Err(Error::InvalidInput(format!(
            "snapshot k = {} lacks the CG quantities alpha, p, s, pAp or the previous residual",
            state.k
        ))),
    }
}

/// Runs identities (a)-(e) plus the orthogonality, Rayleigh-quotient and
/// conjugacy checks over a CG trace.
pub fn hs_identity_battery(
    states: &[SolverState],
    q: &QuadraticObjective,
    truth: &GroundTruth,
    tols: IdentityTolerances,
) -> Result<IdentityReport> {
    let n = q.dim();
    check_dim(n, truth.x_star.len())?;
    for state in states {
        check_dim(n, state.x.len())?;
    }
    let ell = truth.lambda_min;
    let x_star = &truth.x_star;

    let errors: Vec<Vec<f64>> = states.iter().map(|s| sub(&s.x, x_star)).collect();
    let a_errors: Vec<Vec<f64>> = errors.iter().map(|e| q.matrix().matvec(e)).collect();
    let big_f: Vec<f64> = errors.iter().zip(&a_errors).map(|(e, ae)| dot(e, ae)).collect();
    let r0_norm = match states.first().and_then(|s| s.r.as_deref()) {
        Some(r) => norm(r),
        None => match states.first() {
            Some(s) => norm(&q.residual(&s.x)?),
            None => 0.0,
        },
    };

    // ρ_k and w_k; ρ₀ = 0.
    let mut rhos = Vec::with_capacity(states.len());
    let mut ws = Vec::with_capacity(states.len());
    for (k, state) in states.iter().enumerate() {
        let rho = if k == 0 {
            0.0
        } else {
            let f = cg_fields(state)?;
            rho_cg(big_f[k], f.alpha, f.prev_res_sq, k)
        };
        let w = match state.s.as_deref() {
            Some(s) if rho != 0.0 => axpy(&errors[k], rho, s),
            _ => errors[k].clone(),
        };
        rhos.push(rho);
        ws.push(w);
    }

    let mut steps = Vec::with_capacity(states.len());
    let mut failures = IdentityCounts::default();
    let mut max_residual = 0.0f64;
    let mut min_slack = f64::INFINITY;
    let mut converged_steps = 0;
    let floor = tols.gap_floor * big_f.first().copied().unwrap_or(0.0);

    for k in 0..states.len() {
        let w_sq = norm_sq(&ws[k]);
        let bound = big_f[k] / ell;
        let slack = bound - w_sq;
        let e = InequalityCheck {
            value: w_sq,
            bound,
            slack,
            pass: slack >= -tols.inequality_slack,
        };

        let active = big_f[k] > floor;
        converged_steps += (!active) as usize;

        let c = if active && k >= 1 {
            let f = cg_fields(&states[k])?;
            let rho = rhos[k];
            let lhs = -rho * dot(f.s, &axpy(&scale(&errors[k], 2.0), rho, f.s));
            let rhs = big_f[k] * big_f[k] * norm_sq(f.p) / (f.prev_res_sq * f.prev_res_sq);
            Some(IdentityCheck::relative(lhs, rhs, tols.relative))
        } else {
            None
        };

        let (mut a, mut b, mut d, mut prorth, mut alpha_rq, mut conjugacy) =
            (None, None, None, None, None, None);
        if active && k + 1 < states.len() {
            let next = &states[k + 1];
            let f = cg_fields(next)?;
            let e_sum = add(&errors[k], &errors[k + 1]);
            let ae_sum = add(&a_errors[k], &a_errors[k + 1]);
            let res_sq = f.prev_res_sq;

            a = Some(IdentityCheck::relative(
                -dot(f.s, &ae_sum),
                f.alpha * res_sq,
                tols.relative,
            ));
            b = Some(IdentityCheck::relative(
                -dot(f.s, &e_sum),
                (big_f[k] + big_f[k + 1]) * norm_sq(f.p) / f.p_a_p,
                tols.relative,
            ));
            if k >= 1 {
                let lhs = dot(&sub(&ws[k + 1], &ws[k]), &add(&ws[k + 1], &ws[k]));
                d = Some(IdentityCheck::relative(
                    lhs,
                    -big_f[k] * big_f[k] / res_sq,
                    tols.relative,
                ));
            }
            if let Some(r) = next.r.as_deref() {
                prorth = Some(IdentityCheck::bounded(
                    dot(f.p, r),
                    tols.prorth * norm(f.p) * r0_norm,
                ));
            }
            let inv_alpha = 1.0 / f.alpha;
            let lo = truth.lambda_min * (1.0 - tols.alpha_rq);
            let hi = truth.lambda_max * (1.0 + tols.alpha_rq);
            alpha_rq = Some(InequalityCheck {
                value: inv_alpha,
                bound: hi,
                slack: (inv_alpha - lo).min(hi - inv_alpha),
                pass: lo <= inv_alpha && inv_alpha <= hi,
            });
            if k >= 1 {
                let cur = cg_fields(&states[k])?;
                let ap_next = q.matrix().matvec(f.p);
                let bound = tols.conjugacy * cur.p_a_p.max(0.0).sqrt() * f.p_a_p.max(0.0).sqrt();
                conjugacy = Some(IdentityCheck::bounded(dot(cur.p, &ap_next), bound));
            }
        }

        let step = IdentityStep {
            k,
            a,
            b,
            c,
            d,
            e,
            prorth,
            alpha_rq,
            conjugacy,
        };
        for check in step.checks() {
            max_residual = max_residual.max(check.residual);
        }
        min_slack = min_slack.min(slack);
        let fail = |c: &Option<IdentityCheck>| c.as_ref().is_some_and(|c| !c.pass) as usize;
        failures.a += fail(&step.a);
        failures.b += fail(&step.b);
        failures.c += fail(&step.c);
        failures.d += fail(&step.d);
        failures.e += (!step.e.pass) as usize;
        failures.prorth += fail(&step.prorth);
        failures.alpha_rq += step.alpha_rq.is_some_and(|c| !c.pass) as usize;
        failures.conjugacy += fail(&step.conjugacy);
        steps.push(step);
    }

    Ok(IdentityReport {
        tolerances: tols,
        steps,
        failures,
        max_residual,
        min_slack,
        converged_steps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoOptimalityStatus {
    Pass,
    Fail,
    /// `s_k = 0`; the condition holds vacuously.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoOptimalityStep {
    pub k: usize,
    pub rho: f64,
    /// `(x_k + ρ s_k − x*)ᵀ s_k`
    pub inner: f64,
    pub bound: f64,
    pub status: RhoOptimalityStatus,
    /// `‖x_k + ρ s_k − x*‖`
    pub distance: f64,
    /// Distance at the unperturbed `ρ_k`.
    pub optimal_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoOptimalityReport {
    pub offset: f64,
    pub steps: Vec<RhoOptimalityStep>,
    pub failures: usize,
    pub skipped: usize,
}

impl RhoOptimalityReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Checks that the CG `ρ_k` minimizes `‖x_k + ρ s_k − x*‖` over `ρ`, via
/// `w_kᵀs_k = 0` within `1e-8·‖s_k‖·‖x₀ − x*‖`, for every `k ≥ 1`.
pub fn rho_optimality_check(states: &[SolverState], obj: &ObjectiveModel) -> Result<RhoOptimalityReport> {
    rho_optimality_check_with_offset(states, obj, 0.0)
}

/// Same check with `ρ_k + offset` in place of `ρ_k`. A nonzero offset should
/// fail at every step with `s_k ≠ 0`.
pub fn rho_optimality_check_with_offset(
    states: &[SolverState],
    obj: &ObjectiveModel,
    offset: f64,
) -> Result<RhoOptimalityReport> {
    let x_star = obj.minimizer().ok_or(Error::MissingGroundTruth)?;
    let Some(first) = states.first() else {
        return Ok(RhoOptimalityReport {
            offset,
            steps: Vec::new(),
            failures: 0,
            skipped: 0,
        });
    };
    check_dim(obj.dim(), first.x.len())?;
    let d0 = norm(&sub(&first.x, x_star));
    let mut steps = Vec::new();
    let (mut failures, mut skipped) = (0, 0);
    for state in states.iter().skip(1) {
        check_dim(obj.dim(), state.x.len())?;
        let f = cg_fields(state)?;
        let e = sub(&state.x, x_star);
        let rho_opt = rho_cg(2.0 * obj.gap(&state.x)?, f.alpha, f.prev_res_sq, state.k);
        let rho = rho_opt + offset;
        let w = axpy(&e, rho, f.s);
        let s_norm = norm(f.s);
        let inner = dot(&w, f.s);
        let bound = 1e-8 * s_norm * d0;
        let status = if s_norm == 0.0 {
            skipped += 1;
            RhoOptimalityStatus::Skipped
        } else if inner.abs() <= bound {
            RhoOptimalityStatus::Pass
        } else {
            failures += 1;
            RhoOptimalityStatus::Fail
        };
        steps.push(RhoOptimalityStep {
            k: state.k,
            rho,
            inner,
            bound,
            status,
            distance: norm(&w),
            optimal_distance: norm(&axpy(&e, rho_opt, f.s)),
        });
    }
    Ok(RhoOptimalityReport {
        offset,
        steps,
        failures,
        skipped,
    })
}
