//! Exact oracles for the two-dimensional instance A = diag(1,3), b = 0,
//! x₀ = (1,1): CG in rational arithmetic and AG in Q(√3). The float
//! implementation is compared against them.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::Ratio;
use unipot::linalg::DenseMatrix;
use unipot::potential::{certify, CertifyOptions};
use unipot::solvers::{run, Family, Method};
use unipot::{ObjectiveModel, QuadraticObjective};

type Q = Ratio<i128>;

fn q(n: i128, d: i128) -> Q {
    Q::new(n, d)
}

fn to_f64(v: Q) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

const DIAG: [i128; 2] = [1, 3];

fn dotq(a: &[Q; 2], b: &[Q; 2]) -> Q {
    a[0] * b[0] + a[1] * b[1]
}

fn aq(v: &[Q; 2]) -> [Q; 2] {
    [v[0] * Q::from(DIAG[0]), v[1] * Q::from(DIAG[1])]
}

struct ExactCg {
    x: Vec<[Q; 2]>,
    alpha: Vec<Q>,
    beta: Vec<Q>,
    res_sq: Vec<Q>,
}

fn exact_cg() -> ExactCg {
    let mut x = vec![[q(1, 1), q(1, 1)]];
    let ax = aq(&x[0]);
    let mut r = [-ax[0], -ax[1]];
    let mut p = [q(0, 1); 2];
    let mut alpha = vec![q(0, 1)];
    let mut beta = vec![q(0, 1)];
    let mut res_sq = vec![dotq(&r, &r)];
    for k in 0..2 {
        let rr = dotq(&r, &r);
        let b = if k == 0 { q(0, 1) } else { rr / res_sq[k - 1] };
        p = [r[0] + b * p[0], r[1] + b * p[1]];
        let ap = aq(&p);
        let a = rr / dotq(&p, &ap);
        let xk = x[k];
        x.push([xk[0] + a * p[0], xk[1] + a * p[1]]);
        r = [r[0] - a * ap[0], r[1] - a * ap[1]];
        alpha.push(a);
        beta.push(b);
        res_sq.push(dotq(&r, &r));
    }
    ExactCg { x, alpha, beta, res_sq }
}

/// `a + b√3` with rational coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
struct R3 {
    a: Q,
    b: Q,
}

impl R3 {
    fn rat(v: Q) -> Self {
        Self { a: v, b: q(0, 1) }
    }

    fn to_f64(self) -> f64 {
        let (a, b) = (to_f64(self.a), to_f64(self.b) * 3f64.sqrt());
        if a * b < 0.0 {
            // a + b√3 = (a² − 3b²)/(a − b√3), numerator exact
            to_f64(self.a * self.a - q(3, 1) * self.b * self.b) / (a - b)
        } else {
            a + b
        }
    }
}

impl Add for R3 {
    type Output = R3;
    fn add(self, o: R3) -> R3 {
        R3 { a: self.a + o.a, b: self.b + o.b }
    }
}

impl Sub for R3 {
    type Output = R3;
    fn sub(self, o: R3) -> R3 {
        R3 { a: self.a - o.a, b: self.b - o.b }
    }
}

impl Neg for R3 {
    type Output = R3;
    fn neg(self) -> R3 {
        R3 { a: -self.a, b: -self.b }
    }
}

impl Mul for R3 {
    type Output = R3;
    fn mul(self, o: R3) -> R3 {
        R3 {
            a: self.a * o.a + q(3, 1) * self.b * o.b,
            b: self.a * o.b + self.b * o.a,
        }
    }
}

impl Div for R3 {
    type Output = R3;
    fn div(self, o: R3) -> R3 {
        let norm = o.a * o.a - q(3, 1) * o.b * o.b;
        let conj = R3 { a: o.a / norm, b: -o.b / norm };
        self * conj
    }
}

struct ExactAg {
    x: Vec<[R3; 2]>,
    psi: Vec<R3>,
}

fn exact_ag(steps: usize) -> ExactAg {
    let sqrt3 = R3 { a: q(0, 1), b: q(1, 1) };
    let one = R3::rat(q(1, 1));
    // θ = (√3 − 1)/(√3 + 1), ρ = √3 − 1 for ℓ = 1, L = 3
    let theta = (sqrt3 - one) / (sqrt3 + one);
    let rho = sqrt3 - one;
    let third = R3::rat(q(1, 3));
    let d = [R3::rat(q(1, 1)), R3::rat(q(3, 1))];
    let mut x = vec![[one, one]];
    let mut s = [R3::rat(q(0, 1)); 2];
    for k in 0..steps {
        let t = if k == 0 { R3::rat(q(0, 1)) } else { theta };
        let xk = x[k];
        let y = [xk[0] + t * s[0], xk[1] + t * s[1]];
        let next = [y[0] - third * d[0] * y[0], y[1] - third * d[1] * y[1]];
        s = [next[0] - xk[0], next[1] - xk[1]];
        x.push(next);
    }
    let mut psi = Vec::new();
    for k in 0..x.len() {
        let (r, sk) = if k == 0 {
            (R3::rat(q(0, 1)), [R3::rat(q(0, 1)); 2])
        } else {
            (rho, [x[k][0] - x[k - 1][0], x[k][1] - x[k - 1][1]])
        };
        let w = [x[k][0] + r * sk[0], x[k][1] + r * sk[1]];
        let big_f = d[0] * x[k][0] * x[k][0] + d[1] * x[k][1] * x[k][1];
        psi.push(w[0] * w[0] + w[1] * w[1] + big_f);
    }
    ExactAg { x, psi }
}

fn model() -> ObjectiveModel {
    let qo = QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 3.0]), vec![0.0; 2]).unwrap();
    ObjectiveModel::quadratic(qo, 1.0, 3.0)
        .unwrap()
        .with_minimizer(vec![0.0, 0.0])
        .unwrap()
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
}

#[test]
fn exact_cg_matches_hand_values() {
    let cg = exact_cg();
    assert_eq!(cg.alpha[1], q(5, 14));
    assert_eq!(cg.x[1], [q(9, 14), q(-1, 14)]);
    assert_eq!(cg.beta[2], q(9, 196));
    assert_eq!(cg.alpha[2], q(14, 15));
    assert_eq!(cg.x[2], [q(0, 1), q(0, 1)]);
    assert_eq!(cg.res_sq[0], q(10, 1));
    // F₀ − F₁ = α₁‖r₀‖²
    let big_f = |x: &[Q; 2]| dotq(x, &aq(x));
    assert_eq!(big_f(&cg.x[0]) - big_f(&cg.x[1]), cg.alpha[1] * cg.res_sq[0]);
    // ρ₁ = F₁/(α₁‖r₀‖²), w₁ = x₁ + ρ₁ s₁
    let rho1 = big_f(&cg.x[1]) / (cg.alpha[1] * cg.res_sq[0]);
    assert_eq!(rho1, q(3, 25));
    let s1 = [cg.x[1][0] - cg.x[0][0], cg.x[1][1] - cg.x[0][1]];
    let w1 = [cg.x[1][0] + rho1 * s1[0], cg.x[1][1] + rho1 * s1[1]];
    assert_eq!(w1, [q(3, 5), q(-1, 5)]);
    assert_eq!(dotq(&w1, &s1), q(0, 1));
    assert_eq!(dotq(&w1, &w1) + big_f(&cg.x[1]), q(29, 35));
    // ‖w₂‖² − ‖w₁‖² = −F₁²/‖r₁‖²
    let f1 = big_f(&cg.x[1]);
    assert_eq!(-dotq(&w1, &w1), -f1 * f1 / cg.res_sq[1]);
}

#[test]
fn float_cg_matches_exact_cg() {
    let cg = exact_cg();
    let obj = model();
    let trace = run(&obj, Method::CgClassic, &[1.0, 1.0], 10, -1.0).unwrap();
    assert_eq!(trace.states.len(), 3);
    for k in 0..3 {
        for i in 0..2 {
            close(trace.states[k].x[i], to_f64(cg.x[k][i]));
        }
    }
    close(trace.states[1].alpha.unwrap(), to_f64(cg.alpha[1]));
    close(trace.states[2].alpha.unwrap(), to_f64(cg.alpha[2]));
    close(trace.states[2].beta.unwrap(), to_f64(cg.beta[2]));

    let report = certify(&trace.states, &obj, Family::Cg, CertifyOptions::default()).unwrap();
    close(report.points[0].psi, 6.0);
    close(report.points[1].psi, 29.0 / 35.0);
    close(report.points[2].psi, 0.0);
    close(report.points[1].rho, 0.12);
    assert!(report.passed());
}

#[test]
fn exact_ag_matches_hand_values() {
    let ag = exact_ag(2);
    assert_eq!(ag.x[1][0], R3::rat(q(2, 3)));
    assert_eq!(ag.x[1][1], R3::rat(q(0, 1)));
    assert_eq!(ag.x[2][0], R3 { a: q(0, 1), b: q(2, 9) });
    assert_eq!(ag.psi[0], R3::rat(q(6, 1)));
    assert_eq!(ag.psi[1], R3 { a: q(52, 9), b: q(-8, 3) });
    assert_eq!(ag.psi[2], R3 { a: q(88, 27), b: q(-16, 9) });
}

#[test]
fn float_ag_matches_exact_ag() {
    let steps = 12;
    let ag = exact_ag(steps);
    let obj = model();
    let trace = run(&obj, Method::Ag, &[1.0, 1.0], steps, -1.0).unwrap();
    let report = certify(&trace.states, &obj, Family::Ag, CertifyOptions::default()).unwrap();
    for k in 0..=steps {
        close(trace.states[k].x[0], ag.x[k][0].to_f64());
        close(trace.states[k].x[1], ag.x[k][1].to_f64());
        close(report.points[k].psi, ag.psi[k].to_f64());
    }
    let c = (3.0 + 3f64.sqrt()) / 2.0;
    assert!((c * ag.psi[2].to_f64() - 0.4260).abs() < 1e-4);
    assert!(report.passed());
}

#[test]
fn unified_schedules_reproduce_exact_iterates() {
    let cg = exact_cg();
    let ag = exact_ag(6);
    let obj = model();
    let cgu = run(&obj, Method::CgUnified, &[1.0, 1.0], 10, -1.0).unwrap();
    for k in 0..3 {
        for i in 0..2 {
            close(cgu.states[k].x[i], to_f64(cg.x[k][i]));
        }
    }
    let agu = run(&obj, Method::AgUnified, &[1.0, 1.0], 6, -1.0).unwrap();
    for k in 0..=6 {
        for i in 0..2 {
            close(agu.states[k].x[i], ag.x[k][i].to_f64());
        }
    }
}
