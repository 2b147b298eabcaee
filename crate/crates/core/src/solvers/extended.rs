//! Classic and unified CG carried out in a wider arithmetic than `f64`:
//! double-double, or binary floating point of any significand width. The
//! matrix and right-hand side stay in `f64`; iterates, residuals,
//! directions and step scalars use the wide type, and every emitted
//! [`SolverState`] is rounded to `f64`.

use std::ops::ControlFlow;

use super::{
    check_param_signs, drive, require_quadratic, Precision, ScheduleParams, SolverState,
    StopRule, Termination, BREAKDOWN_FACTOR,
};
use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::mpfloat::{MpContext, MpFloat};
use crate::objective::{ObjectiveModel, QuadraticObjective};
use crate::solvers::Method;

trait Arith {
    type T: Clone;
    fn lift(&self, v: f64) -> Self::T;
    fn to_f64(&self, a: &Self::T) -> f64;
    fn add(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn div(&self, a: &Self::T, b: &Self::T) -> Self::T;

    fn dot(&self, a: &[Self::T], b: &[Self::T]) -> Self::T {
        a.iter()
            .zip(b)
            .fold(self.lift(0.0), |acc, (x, y)| self.add(&acc, &self.mul(x, y)))
    }
}

struct DdArith;

impl Arith for DdArith {
    type T = Dd;
    fn lift(&self, v: f64) -> Dd {
        Dd::from(v)
    }
    fn to_f64(&self, a: &Dd) -> f64 {
        a.to_f64()
    }
    fn add(&self, a: &Dd, b: &Dd) -> Dd {
        *a + *b
    }
    fn sub(&self, a: &Dd, b: &Dd) -> Dd {
        *a - *b
    }
    fn mul(&self, a: &Dd, b: &Dd) -> Dd {
        *a * *b
    }
    fn div(&self, a: &Dd, b: &Dd) -> Dd {
        *a / *b
    }
}

impl Arith for MpContext {
    type T = MpFloat;
    fn lift(&self, v: f64) -> MpFloat {
        MpContext::lift(*self, v)
    }
    fn to_f64(&self, a: &MpFloat) -> f64 {
        a.to_f64()
    }
    fn add(&self, a: &MpFloat, b: &MpFloat) -> MpFloat {
        MpContext::add(*self, a, b)
    }
    fn sub(&self, a: &MpFloat, b: &MpFloat) -> MpFloat {
        MpContext::sub(*self, a, b)
    }
    fn mul(&self, a: &MpFloat, b: &MpFloat) -> MpFloat {
        MpContext::mul(*self, a, b)
    }
    fn div(&self, a: &MpFloat, b: &MpFloat) -> MpFloat {
        MpContext::div(*self, a, b)
    }
    fn dot(&self, a: &[MpFloat], b: &[MpFloat]) -> MpFloat {
        MpContext::dot(*self, a, b)
    }
}

struct Ops<'a, A: Arith> {
    ar: &'a A,
    rows: Vec<Vec<A::T>>,
    rhs: Vec<A::T>,
}

impl<'a, A: Arith> Ops<'a, A> {
    fn new(ar: &'a A, q: &QuadraticObjective) -> Self {
        let a = q.matrix();
        let lift = |v: &[f64]| v.iter().map(|&x| ar.lift(x)).collect::<Vec<_>>();
        Self {
            ar,
            rows: (0..a.rows()).map(|i| lift(a.row(i))).collect(),
            rhs: lift(q.rhs()),
        }
    }

    fn zero(&self) -> A::T {
        self.ar.lift(0.0)
    }

    fn f(&self, a: &A::T) -> f64 {
        self.ar.to_f64(a)
    }

    fn dot(&self, a: &[A::T], b: &[A::T]) -> A::T {
        self.ar.dot(a, b)
    }

    /// `a + s·b`
    fn axpy(&self, a: &[A::T], s: &A::T, b: &[A::T]) -> Vec<A::T> {
        a.iter()
            .zip(b)
            .map(|(x, y)| self.ar.add(x, &self.ar.mul(s, y)))
            .collect()
    }

    fn sub(&self, a: &[A::T], b: &[A::T]) -> Vec<A::T> {
        a.iter().zip(b).map(|(x, y)| self.ar.sub(x, y)).collect()
    }

    fn lift(&self, v: &[f64]) -> Vec<A::T> {
        v.iter().map(|&x| self.ar.lift(x)).collect()
    }

    fn round(&self, v: &[A::T]) -> Vec<f64> {
        v.iter().map(|x| self.f(x)).collect()
    }

    fn apply(&self, v: &[A::T]) -> Vec<A::T> {
        self.rows.iter().map(|row| self.dot(row, v)).collect()
    }

    /// `b − Ax`
    fn residual(&self, x: &[A::T]) -> Vec<A::T> {
        self.sub(&self.rhs, &self.apply(x))
    }

    fn norm(&self, v: &[A::T]) -> f64 {
        self.f(&self.dot(v, v)).sqrt()
    }
}

fn not_pd(k: usize, p_a_p: f64) -> Error {
    Error::NotPositiveDefinite {
        index: k,
        value: p_a_p,
    }
}

struct ClassicCg<'a, A: Arith> {
    ops: Ops<'a, A>,
    x: Vec<A::T>,
    r: Vec<A::T>,
    p: Vec<A::T>,
    alpha: A::T,
    prev_res_sq: A::T,
    r0_norm: f64,
}

impl<A: Arith> ClassicCg<'_, A> {
    fn step(&mut self, k: usize) -> Result<Option<SolverState>> {
        let o = &self.ops;
        let res_sq = o.dot(&self.r, &self.r);
        let threshold = BREAKDOWN_FACTOR * self.r0_norm;
        if o.f(&res_sq) <= threshold * threshold {
            return Ok(None);
        }
        let (beta, p) = if k == 0 {
            (o.zero(), self.r.clone())
        } else {
            let beta = o.ar.div(&res_sq, &self.prev_res_sq);
            let p = o.axpy(&self.r, &beta, &self.p);
            (beta, p)
        };
        let ap = o.apply(&p);
        let p_a_p = o.dot(&p, &ap);
        if !(o.f(&p_a_p) > 0.0) {
            return Err(not_pd(k, o.f(&p_a_p)));
        }
        let alpha = o.ar.div(&res_sq, &p_a_p);
        let x_next = o.axpy(&self.x, &alpha, &p);
        let neg_alpha = o.ar.sub(&o.zero(), &alpha);
        let r_next = o.axpy(&self.r, &neg_alpha, &ap);
        let nu = if k == 0 {
            o.zero()
        } else {
            o.ar.div(&o.ar.mul(&alpha, &beta), &self.alpha)
        };
        let drift = ((k + 1).is_multiple_of(10) && self.r0_norm > 0.0)
            .then(|| o.norm(&o.sub(&o.residual(&x_next), &r_next)) / self.r0_norm);
        let state = SolverState {
            k: k + 1,
            x: o.round(&x_next),
            s: Some(o.round(&o.sub(&x_next, &self.x))),
            y: Some(o.round(&self.x)),
            r: Some(o.round(&r_next)),
            p: Some(o.round(&p)),
            alpha: Some(o.f(&alpha)),
            beta: Some(o.f(&beta)),
            prev_res_sq: Some(o.f(&res_sq)),
            p_a_p: Some(o.f(&p_a_p)),
            step_params: Some(ScheduleParams {
                theta: 0.0,
                nu: o.f(&nu),
                pi: o.f(&alpha),
                rho_next: None,
                degenerate: false,
            }),
            residual_drift: drift,
            ..SolverState::default()
        };
        self.x = x_next;
        self.r = r_next;
        self.p = p;
        self.alpha = alpha;
        self.prev_res_sq = res_sq;
        Ok(Some(state))
    }
}

/// Unified iteration with the CG schedule: `r_k = b − Ax_k` and
/// `p_k = s_k/α_k` are rebuilt from the iterate at every step.
struct UnifiedCg<'a, A: Arith> {
    ops: Ops<'a, A>,
    x: Vec<A::T>,
    s: Vec<A::T>,
    alpha: A::T,
    prev_res_sq: A::T,
    breakdown: f64,
}

impl<A: Arith> UnifiedCg<'_, A> {
    fn step(&mut self, k: usize) -> Result<Option<SolverState>> {
        let o = &self.ops;
        let r = o.residual(&self.x);
        let res_sq = o.dot(&r, &r);
        if o.f(&res_sq) <= self.breakdown * self.breakdown {
            return Ok(None);
        }
        let (beta, p) = if k == 0 {
            (o.zero(), r.clone())
        } else {
            let beta = o.ar.div(&res_sq, &self.prev_res_sq);
            let p_prev: Vec<A::T> = self.s.iter().map(|v| o.ar.div(v, &self.alpha)).collect();
            let p = o.axpy(&r, &beta, &p_prev);
            (beta, p)
        };
        let p_a_p = o.dot(&p, &o.apply(&p));
        if !(o.f(&p_a_p) > 0.0) {
            return Err(not_pd(k, o.f(&p_a_p)));
        }
        let alpha = o.ar.div(&res_sq, &p_a_p);
        let nu = if k == 0 {
            o.zero()
        } else {
            o.ar.div(&o.ar.mul(&alpha, &beta), &self.alpha)
        };
        let params = ScheduleParams {
            theta: 0.0,
            nu: o.f(&nu),
            pi: o.f(&alpha),
            rho_next: None,
            degenerate: false,
        };
        check_param_signs(k, &params)?;
        // θ = 0, so y = x and ∇f(y) = −r.
        let x_next = o.axpy(&o.axpy(&self.x, &nu, &self.s), &alpha, &r);
        let s_next = o.sub(&x_next, &self.x);
        let state = SolverState {
            k: k + 1,
            x: o.round(&x_next),
            s: Some(o.round(&s_next)),
            y: Some(o.round(&self.x)),
            grad_y: Some(r.iter().map(|v| -o.f(v)).collect()),
            alpha: Some(o.f(&alpha)),
            beta: Some(o.f(&beta)),
            prev_res_sq: Some(o.f(&res_sq)),
            p: Some(o.round(&p)),
            p_a_p: Some(o.f(&p_a_p)),
            step_params: Some(params),
            ..SolverState::default()
        };
        self.x = x_next;
        self.s = s_next;
        self.alpha = alpha;
        self.prev_res_sq = res_sq;
        Ok(Some(state))
    }
}

fn drive_cg<A: Arith>(
    ar: &A,
    q: &QuadraticObjective,
    method: Method,
    x0: &[f64],
    max_iters: usize,
    stop: &StopRule<'_>,
    visit: impl FnMut(&SolverState) -> ControlFlow<()>,
) -> Result<Termination> {
    let ops = Ops::new(ar, q);
    let x = ops.lift(x0);
    let r0 = ops.residual(&x);
    let r0_norm = ops.norm(&r0);
    let mut start = SolverState::initial(x0.to_vec());
    if method == Method::CgUnified {
        let mut it = UnifiedCg {
            s: vec![ops.zero(); x.len()],
            x,
            alpha: ops.zero(),
            prev_res_sq: ops.zero(),
            breakdown: BREAKDOWN_FACTOR * r0_norm,
            ops,
        };
        drive(start, max_iters, stop, visit, |s| it.step(s.k))
    } else {
        start.r = Some(ops.round(&r0));
        let mut it = ClassicCg {
            p: vec![ops.zero(); x.len()],
            x,
            r: r0,
            alpha: ops.zero(),
            prev_res_sq: ops.zero(),
            r0_norm,
            ops,
        };
        drive(start, max_iters, stop, visit, |s| it.step(s.k))
    }
}

/// Counterpart of [`super::run_with`] for the two CG methods at a wider
/// precision. The accelerated methods and [`Precision::Double`] are
/// rejected.
pub fn run_extended_with(
    obj: &ObjectiveModel,
    method: Method,
    x0: &[f64],
    max_iters: usize,
    stop_gap: f64,
    precision: Precision,
    visit: impl FnMut(&SolverState) -> ControlFlow<()>,
) -> Result<Termination> {
    if max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be at least 1".into()));
    }
    crate::error::check_dim(obj.dim(), x0.len())?;
    let q = match method {
        Method::CgClassic | Method::CgUnified => require_quadratic(obj)?,
        Method::Ag | Method::AgUnified => {
            return Err(Error::Unsupported(format!(
                "precision {precision} is available for the CG methods only, not {method}"
            )))
        }
    };
    let stop = StopRule::new(obj, x0, stop_gap)?;
    match precision {
        Precision::Double => Err(Error::InvalidInput(
            "double precision runs go through run_with".into(),
        )),
        Precision::Extended => drive_cg(&DdArith, q, method, x0, max_iters, &stop, visit),
        Precision::Bits(bits) => {
            drive_cg(&MpContext::new(bits), q, method, x0, max_iters, &stop, visit)
        }
    }
}
