use std::fmt::Write as _;

use super::CertificateReport;

pub const CERTIFICATE_CSV_HEADER: &str =
    "k,psi,ratio,C,pass,f_gap,theorem1_bound,daniel_bound,dist_to_opt,w_norm_sq,rho";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per iterate. Row `k` carries `Ψ_{k−1}/Ψ_k` and the verdict of
/// the step that ended at `k`; row 0 has an empty ratio.
pub fn certificate_csv(report: &CertificateReport) -> String {
    let mut out = String::from(CERTIFICATE_CSV_HEADER);
    out.push('\n');
    for (i, p) in report.points.iter().enumerate() {
        let (ratio, pass) = match i.checked_sub(1).and_then(|j| report.steps.get(j)) {
            Some(step) => (num(step.ratio), step.pass),
            None => (String::new(), true),
        };
        let theorem1 = report
            .envelope_theorem1
            .get(i)
            .map(|e| num(e.bound))
            .unwrap_or_default();
        let daniel = report
            .envelope_daniel
            .as_ref()
            .and_then(|d| d.get(i))
            .map(|e| num(e.bound))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.k,
            num(p.psi),
            ratio,
            num(report.constant),
            pass,
            num(p.f_gap),
            theorem1,
            daniel,
            num(p.dist_to_opt),
            num(p.w_norm_sq),
            num(p.rho)
        );
    }
    out
}
