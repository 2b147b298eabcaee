//! The potential `Ψ_k = ‖w_k‖² + (2/ℓ)(f(x_k) − f*)` with
//! `w_k = x_k + ρ_k s_k − x*`, its per-step contraction certificate
//! `C·Ψ_{k+1} ≤ Ψ_k` (`Ψ₁ ≤ Ψ₀` at the first step), and the two envelope
//! bounds on `f(x_k) − f*` that follow from it.

mod identities;
mod report;

pub use identities::{
    hs_identity_battery, rho_optimality_check, rho_optimality_check_with_offset, IdentityCheck,
    IdentityCounts,
    IdentityReport, IdentityStep, IdentityTolerances, InequalityCheck, RhoOptimalityReport,
    RhoOptimalityStatus, RhoOptimalityStep,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, norm_sq, sub};
use crate::objective::ObjectiveModel;
use crate::quadratic_gen::extreme_eigenvalues;
use crate::solvers::{Family, SolverState};

/// Relative slack on both envelope bounds.
pub const ENVELOPE_SLACK: f64 = 1e-9;

/// Default certificate slack `1e-9·(1 + κ·2⁻⁵²·dim)`.
pub fn default_tol_cert(kappa: f64, dim: usize) -> f64 {
    1e-9 * (1.0 + kappa * f64::EPSILON * dim as f64)
}

/// `ρ_k` for accelerated gradient: `0` at `k = 0`, `√(L/ℓ) − 1` after.
/// The flag is set when `L = ℓ`, in which case `0` is returned.
pub fn rho_ag(ell: f64, lip: f64, k: usize) -> (f64, bool) {
    if k == 0 {
        return (0.0, false);
    }
    if lip == ell {
        return (0.0, true);
    }
    ((lip / ell).sqrt() - 1.0, false)
}

/// `ρ_k = F_k/(α_k‖r_{k−1}‖²)` for conjugate gradient, `0` at `k = 0` or when
/// the denominator vanishes.
pub fn rho_cg(big_f: f64, alpha_k: f64, res_prev_sq: f64, k: usize) -> f64 {
    let denom = alpha_k * res_prev_sq;
    if k == 0 || denom == 0.0 {
        0.0
    } else {
        big_f / denom
    }
}

/// Contraction constant: `1 + 1/(√(L/ℓ) − 1)` for AG, `1 + √(ℓ/L)` for CG.
pub fn contraction_constant(family: Family, ell: f64, lip: f64) -> Result<f64> {
    match family {
        Family::Cg => Ok(1.0 + (ell / lip).sqrt()),
        Family::Ag if lip > ell => Ok(1.0 + 1.0 / ((lip / ell).sqrt() - 1.0)),
        Family::Ag => Err(Error::Degenerate(
            "the accelerated-gradient constant needs L > ell".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialPoint {
    pub k: usize,
    pub rho: f64,
    pub w: Vec<f64>,
    pub w_norm_sq: f64,
    pub f_gap: f64,
    /// `F_k = 2·f_gap`
    #[serde(rename = "F")]
    pub big_f: f64,
    pub psi: f64,
}

/// Potential at one iterate. `s_k = None` (the first iterate) drops the
/// `ρ_k s_k` term.
pub fn psi(
    obj: &ObjectiveModel,
    k: usize,
    x_k: &[f64],
    s_k: Option<&[f64]>,
    rho_k: f64,
) -> Result<PotentialPoint> {
    let x_star = obj.minimizer().ok_or(Error::MissingGroundTruth)?;
    check_dim(obj.dim(), x_k.len())?;
    let f_gap = obj.gap(x_k)?;
    let e = sub(x_k, x_star);
    let w = match s_k {
        Some(s) if rho_k != 0.0 => {
            check_dim(obj.dim(), s.len())?;
            axpy(&e, rho_k, s)
        }
        _ => e,
    };
    let w_norm_sq = norm_sq(&w);
    let big_f = 2.0 * f_gap;
    Ok(PotentialPoint {
        k,
        rho: rho_k,
        w,
        w_norm_sq,
        f_gap,
        big_f,
        psi: w_norm_sq + big_f / obj.ell(),
    })
}

/// `ρ_k` for a snapshot of the given family.
pub fn rho_for(obj: &ObjectiveModel, family: Family, state: &SolverState) -> Result<f64> {
    match family {
        Family::Ag => Ok(rho_ag(obj.ell(), obj.lip(), state.k).0),
        Family::Cg => {
            if state.k == 0 {
                return Ok(0.0);
            }
            let (alpha, res_prev_sq) = match (state.alpha, state.prev_res_sq) {
                (Some(a), Some(r)) => (a, r),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "CG snapshot k = {} lacks alpha or the previous residual norm",
                        state.k
                    )))
                }
            };
            Ok(rho_cg(2.0 * obj.gap(&state.x)?, alpha, res_prev_sq, state.k))
        }
    }
}

/// Potential at a snapshot.
pub fn potential_at(obj: &ObjectiveModel, family: Family, state: &SolverState) -> Result<PotentialPoint> {
    let rho = rho_for(obj, family, state)?;
    let s = if state.k == 0 { None } else { state.s.as_deref() };
    if state.k > 0 && s.is_none() && rho != 0.0 {
        return Err(Error::InvalidInput(format!(
            "snapshot k = {} has no displacement",
            state.k
        )));
    }
    psi(obj, state.k, &state.x, s, rho)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct CertifyOptions {
    /// Relative slack; `None` uses [`default_tol_cert`].
    pub tol_cert: Option<f64>,
    /// Estimate the extreme eigenvalues of a quadratic and flag declared
    /// parameters that are off by more than 1%.
    pub check_looseness: bool,
}

/// One certificate check, for the step from iterate `k` to `k + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertStep {
    pub k: usize,
    pub psi: f64,
    pub psi_next: f64,
    /// `Ψ_k / Ψ_{k+1}` (infinite when `Ψ_{k+1} = 0 < Ψ_k`).
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeEntry {
    pub k: usize,
    pub bound: f64,
    pub f_gap: f64,
    pub pass: bool,
}

/// Per-iterate scalars kept by the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub k: usize,
    pub psi: f64,
    pub f_gap: f64,
    pub dist_to_opt: f64,
    pub w_norm_sq: f64,
    pub rho: f64,
}

/// The accelerated-gradient run re-checked with `C = 1 + √(ℓ/L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonConstantCheck {
    pub constant: f64,
    pub violations: usize,
    pub first_violation: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Looseness {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Declared `ℓ` or `L` differs from the estimate by more than 1%.
    pub loose: bool,
    /// Declared parameters do not bracket the spectrum, so the certificate
    /// is not guaranteed to hold.
    pub invalid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub method: Family,
    #[serde(rename = "C")]
    pub constant: f64,
    pub tol_cert: f64,
    /// `L = ℓ` with an accelerated-gradient trace; the CG constant was used.
    pub degenerate: bool,
    pub steps: Vec<CertStep>,
    pub first_violation: Option<usize>,
    pub points: Vec<PointSummary>,
    pub envelope_theorem1: Vec<EnvelopeEntry>,
    pub envelope_daniel: Option<Vec<EnvelopeEntry>>,
    pub common_constant: Option<CommonConstantCheck>,
    /// Count of iterates where `(ℓ/2)·Ψ_k ≥ f_gap_k` fails.
    pub lower_bound_violations: usize,
    pub looseness: Option<Looseness>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn violations(&self) -> usize {
        self.steps.iter().filter(|s| !s.pass).count()
    }

    pub fn theorem1_violations(&self) -> usize {
        self.envelope_theorem1.iter().filter(|e| !e.pass).count()
    }

    pub fn daniel_violations(&self) -> Option<usize> {
        self.envelope_daniel
            .as_ref()
            .map(|d| d.iter().filter(|e| !e.pass).count())
    }
}

/// Incremental certifier: feed snapshots in order with [`push`](Self::push).
#[derive(Debug)]
pub struct CertificateBuilder<'a> {
    obj: &'a ObjectiveModel,
    family: Family,
    constant: f64,
    common: Option<f64>,
    tol: f64,
    degenerate: bool,
    sqrt_ratio: f64,
    c0: Option<f64>,
    f_gap0: Option<f64>,
    prev_psi: Option<f64>,
    last_f_gap: Option<f64>,
    report: CertificateReport,
}

impl<'a> CertificateBuilder<'a> {
    pub fn new(obj: &'a ObjectiveModel, family: Family, options: CertifyOptions) -> Result<Self> {
        if obj.minimizer().is_none() || obj.min_value().is_none() {
            return Err(Error::MissingGroundTruth);
        }
        let (ell, lip) = (obj.ell(), obj.lip());
        let (constant, degenerate) = match contraction_constant(family, ell, lip) {
            Ok(c) => (c, false),
            Err(Error::Degenerate(_)) => (contraction_constant(Family::Cg, ell, lip)?, true),
            Err(e) => return Err(e),
        };
        let common = match family {
            Family::Ag => Some(contraction_constant(Family::Cg, ell, lip)?),
            Family::Cg => None,
        };
        let tol = match options.tol_cert {
            Some(t) if t > 0.0 && t.is_finite() => t,
            Some(t) => return Err(Error::InvalidInput(format!("tol_cert must be positive, got {t}"))),
            None => default_tol_cert(obj.kappa(), obj.dim()),
        };
        let looseness = if options.check_looseness {
            obj.as_quadratic().map(|q| looseness(q, ell, lip))
        } else {
            None
        };
        Ok(Self {
            obj,
            family,
            constant,
            common,
            tol,
            degenerate,
            sqrt_ratio: (ell / lip).sqrt(),
            c0: None,
            f_gap0: None,
            prev_psi: None,
            last_f_gap: None,
            report: CertificateReport {
                method: family,
                constant,
                tol_cert: tol,
                degenerate,
                steps: Vec::new(),
                first_violation: None,
                points: Vec::new(),
                envelope_theorem1: Vec::new(),
                envelope_daniel: (family == Family::Cg).then(Vec::new),
                common_constant: common.map(|constant| CommonConstantCheck {
                    constant,
                    violations: 0,
                    first_violation: None,
                }),
                lower_bound_violations: 0,
                looseness,
            },
        })
    }

    pub fn tol_cert(&self) -> f64 {
        self.tol
    }

    /// `f(x_k) − f*` of the last pushed snapshot.
    pub fn last_f_gap(&self) -> Option<f64> {
        self.last_f_gap
    }

    /// `f(x₀) − f*`
    pub fn initial_f_gap(&self) -> Option<f64> {
        self.f_gap0
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.report.first_violation
    }

    pub fn push(&mut self, state: &SolverState) -> Result<&PointSummary> {
        let expected = self.report.points.len();
        if state.k != expected {
            return Err(Error::InvalidInput(format!(
                "snapshots out of order: expected k = {expected}, got {}",
                state.k
            )));
        }
        check_dim(self.obj.dim(), state.x.len())?;
        let point = potential_at(self.obj, self.family, state)?;
        let ell = self.obj.ell();
        let k = state.k;

        if k == 0 {
            let dist_sq = norm_sq(&point.w);
            self.c0 = Some(0.5 * ell * dist_sq + point.f_gap);
            self.f_gap0 = Some(point.f_gap);
        }
        let c0 = self.c0.unwrap_or_default();
        let f_gap0 = self.f_gap0.unwrap_or_default();

        // (ℓ/2)Ψ_k ≥ f_gap_k holds by construction; any failure is a bug.
        if 0.5 * ell * point.psi < point.f_gap * (1.0 - 1e-14) {
            self.report.lower_bound_violations += 1;
        }

        let theorem1 = c0 * (1.0 + self.sqrt_ratio).powf(-(k as f64 - 1.0));
        self.report.envelope_theorem1.push(EnvelopeEntry {
            k,
            bound: theorem1,
            f_gap: point.f_gap,
            pass: point.f_gap <= theorem1 * (1.0 + ENVELOPE_SLACK),
        });
        if let Some(daniel) = self.report.envelope_daniel.as_mut() {
            let q = (1.0 - self.sqrt_ratio) / (1.0 + self.sqrt_ratio);
            let bound = 4.0 * q.powf(2.0 * k as f64) * f_gap0;
            daniel.push(EnvelopeEntry {
                k,
                bound,
                f_gap: point.f_gap,
                pass: point.f_gap <= bound * (1.0 + ENVELOPE_SLACK),
            });
        }

        if let Some(prev) = self.prev_psi {
            let prev_k = k - 1;
            let slack = 1.0 + self.tol;
            let pass = if prev_k == 0 {
                point.psi <= prev * slack
            } else {
                self.constant * point.psi <= prev * slack
            };
            if !pass && self.report.first_violation.is_none() {
                self.report.first_violation = Some(prev_k);
            }
            if let (Some(c), Some(check)) = (self.common, self.report.common_constant.as_mut()) {
                let ok = prev_k == 0 || c * point.psi <= prev * slack;
                if !ok {
                    check.violations += 1;
                    check.first_violation.get_or_insert(prev_k);
                }
            }
            let ratio = if point.psi == 0.0 {
                if prev == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                prev / point.psi
            };
            self.report.steps.push(CertStep {
                k: prev_k,
                psi: prev,
                psi_next: point.psi,
                ratio,
                pass,
            });
        }
        self.prev_psi = Some(point.psi);
        self.last_f_gap = Some(point.f_gap);

        let dist_to_opt = self.obj.dist_to_opt(&state.x)?;
        self.report.points.push(PointSummary {
            k,
            psi: point.psi,
            f_gap: point.f_gap,
            dist_to_opt,
            w_norm_sq: point.w_norm_sq,
            rho: point.rho,
        });
        Ok(self.report.points.last().expect("just pushed"))
    }

    pub fn finish(self) -> CertificateReport {
        self.report
    }

    pub fn report(&self) -> &CertificateReport {
        &self.report
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

fn looseness(q: &crate::objective::QuadraticObjective, ell: f64, lip: f64) -> Looseness {
    let (lo, hi) = match extreme_eigenvalues(q) {
        Ok(pair) => pair,
        Err(Error::Estimation {
            lambda_min,
            lambda_max,
            ..
        }) => (lambda_min, lambda_max),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let off = |declared: f64, est: f64| ((declared - est) / est).abs() > 0.01;
    Looseness {
        lambda_min: lo,
        lambda_max: hi,
        loose: off(ell, lo) || off(lip, hi),
        invalid: ell > lo * (1.0 + 1e-8) || lip < hi * (1.0 - 1e-8),
    }
}

/// Certifies a whole trace.
pub fn certify(
    states: &[SolverState],
    obj: &ObjectiveModel,
    family: Family,
    options: CertifyOptions,
) -> Result<CertificateReport> {
    if states.is_empty() {
        return Err(Error::InvalidInput("cannot certify an empty trace".into()));
    }
    let mut builder = CertificateBuilder::new(obj, family, options)?;
    for state in states {
        builder.push(state)?;
    }
    Ok(builder.finish())
}

pub use report::{certificate_csv, CERTIFICATE_CSV_HEADER};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::objective::QuadraticObjective;
    use crate::solvers::{run, Method};

    fn diag13() -> ObjectiveModel {
        let q = QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 3.0]), vec![0.0; 2]).unwrap();
        ObjectiveModel::quadratic(q, 1.0, 3.0)
            .unwrap()
            .with_minimizer(vec![0.0, 0.0])
            .unwrap()
    }

    #[test]
    fn rho_ag_values() {
        assert!((rho_ag(1.0, 3.0, 2).0 - 0.732_050_807_568_877_2).abs() < 1e-15);
        assert_eq!(rho_ag(1.0, 3.0, 0), (0.0, false));
        assert_eq!(rho_ag(1.0, 4.0, 1), (1.0, false));
        assert_eq!(rho_ag(2.0, 2.0, 5), (0.0, true));
    }

    #[test]
    fn rho_cg_values() {
        assert!((rho_cg(3.0 / 7.0, 5.0 / 14.0, 10.0, 1) - 3.0 / 25.0).abs() < 1e-15);
        assert_eq!(rho_cg(1.0, 2.0, 3.0, 0), 0.0);
        assert_eq!(rho_cg(0.0, 2.0, 3.0, 4), 0.0);
        assert_eq!(rho_cg(1.0, 0.0, 3.0, 4), 0.0);
    }

    #[test]
    fn constants() {
        assert!((contraction_constant(Family::Cg, 1.0, 3.0).unwrap() - 1.577_350_269_189_625_7).abs() < 1e-15);
        assert!((contraction_constant(Family::Ag, 1.0, 3.0).unwrap() - (3.0 + 3f64.sqrt()) / 2.0).abs() < 1e-15);
        assert_eq!(contraction_constant(Family::Cg, 2.0, 2.0).unwrap(), 2.0);
        assert!(matches!(
            contraction_constant(Family::Ag, 2.0, 2.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn psi_initial_and_at_minimizer() {
        let obj = diag13();
        let p = psi(&obj, 0, &[1.0, 1.0], None, 0.0).unwrap();
        assert_eq!(p.psi, 6.0);
        assert_eq!(p.w, vec![1.0, 1.0]);
        let z = psi(&obj, 3, &[0.0, 0.0], Some(&[0.0, 0.0]), 0.4).unwrap();
        assert_eq!(z.psi, 0.0);
        assert!(0.5 * obj.ell() * p.psi >= p.f_gap);
    }

    #[test]
    fn psi_needs_ground_truth() {
        let q = QuadraticObjective::new(DenseMatrix::identity(2), vec![0.0; 2]).unwrap();
        let obj = ObjectiveModel::quadratic(q, 1.0, 1.0).unwrap();
        assert!(matches!(psi(&obj, 0, &[1.0, 0.0], None, 0.0), Err(Error::MissingGroundTruth)));
        assert!(matches!(
            CertificateBuilder::new(&obj, Family::Cg, CertifyOptions::default()),
            Err(Error::MissingGroundTruth)
        ));
    }

    #[test]
    fn cg_certificate_on_diag13() {
        let obj = diag13();
        let trace = run(&obj, Method::CgClassic, &[1.0, 1.0], 10, -1.0).unwrap();
        let report = certify(&trace.states, &obj, Family::Cg, CertifyOptions::default()).unwrap();
        let psis: Vec<f64> = report.points.iter().map(|p| p.psi).collect();
        assert!((psis[0] - 6.0).abs() < 1e-14);
        assert!((psis[1] - 29.0 / 35.0).abs() < 1e-14);
        assert!(psis[2].abs() < 1e-14);
        assert!(report.passed());
        assert_eq!(report.theorem1_violations(), 0);
        assert_eq!(report.daniel_violations(), Some(0));
    }

    #[test]
    fn ag_certificate_on_diag13() {
        let obj = diag13();
        let trace = run(&obj, Method::Ag, &[1.0, 1.0], 40, -1.0).unwrap();
        let report = certify(&trace.states, &obj, Family::Ag, CertifyOptions::default()).unwrap();
        let r3 = 3f64.sqrt();
        assert!((report.points[1].psi - (52.0 / 9.0 - 8.0 * r3 / 3.0)).abs() < 1e-14);
        assert!((report.points[2].psi - (88.0 / 27.0 - 16.0 * r3 / 9.0)).abs() < 1e-14);
        assert!(report.passed(), "{:?}", report.first_violation);
        let common = report.common_constant.as_ref().unwrap();
        assert_eq!(common.violations, 0);
        assert_eq!(report.lower_bound_violations, 0);
    }

    #[test]
    fn constant_trace_at_minimizer() {
        let obj = diag13();
        let trace = run(&obj, Method::Ag, &[0.0, 0.0], 5, -1.0).unwrap();
        let report = certify(&trace.states, &obj, Family::Ag, CertifyOptions::default()).unwrap();
        assert!(report.points.iter().all(|p| p.psi == 0.0));
        assert!(report.passed());
    }

    #[test]
    fn empty_trace_rejected() {
        let obj = diag13();
        assert!(matches!(
            certify(&[], &obj, Family::Cg, CertifyOptions::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn degenerate_ag_falls_back_to_cg_constant() {
        let q = QuadraticObjective::new(DenseMatrix::identity(2), vec![1.0, 2.0]).unwrap();
        let obj = ObjectiveModel::quadratic(q, 1.0, 1.0)
            .unwrap()
            .with_minimizer(vec![1.0, 2.0])
            .unwrap();
        let trace = run(&obj, Method::Ag, &[0.0, 0.0], 3, -1.0).unwrap();
        let report = certify(&trace.states, &obj, Family::Ag, CertifyOptions::default()).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.constant, 2.0);
        assert!(report.passed());
    }

    #[test]
    fn looseness_flag() {
        let q = QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 3.0]), vec![0.0; 2]).unwrap();
        let loose = ObjectiveModel::quadratic(q, 0.5, 3.0)
            .unwrap()
            .with_minimizer(vec![0.0, 0.0])
            .unwrap();
        let opts = CertifyOptions {
            check_looseness: true,
            ..CertifyOptions::default()
        };
        let trace = run(&loose, Method::CgClassic, &[1.0, 1.0], 5, -1.0).unwrap();
        let report = certify(&trace.states, &loose, Family::Cg, opts).unwrap();
        let l = report.looseness.clone().unwrap();
        assert!(l.loose && !l.invalid);
        assert!(report.passed());
    }
}
