//! File formats: problem JSON, iterate-trace JSON and the per-iteration
//! CSV summary. Floats are written with 17 significant digits.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{norm, DenseMatrix};
use crate::objective::{Function, LogisticRidgeObjective, ObjectiveModel, QuadraticObjective};
use crate::potential::{CertificateBuilder, CertifyOptions};
use crate::quadratic_gen::{extreme_eigenvalues, GeneratedProblem, GroundTruth};
use crate::solvers::{Family, SolverState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    LogisticRidge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    pub x0: Vec<f64>,
    pub ell: f64,
    #[serde(rename = "L")]
    pub lip: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProblemSpec {
    pub fn from_generated(problem: &GeneratedProblem, seed: u64) -> Self {
        Self {
            kind: ProblemKind::Quadratic,
            dim: problem.objective.dim(),
            matrix: Some(problem.objective.matrix().to_rows()),
            rhs: Some(problem.objective.rhs().to_vec()),
            data_matrix: None,
            ridge: None,
            x0: problem.x0.clone(),
            ell: problem.truth.lambda_min,
            lip: problem.truth.lambda_max,
            x_star: Some(problem.truth.x_star.clone()),
            f_star: Some(problem.truth.f_star),
            seed: Some(seed),
        }
    }

    pub fn from_logistic(obj: &LogisticRidgeObjective, x0: Vec<f64>, x_star: Option<Vec<f64>>, seed: Option<u64>) -> Result<Self> {
        let f_star = match &x_star {
            Some(x) => Some(obj.eval(x)?),
            None => None,
        };
        Ok(Self {
            kind: ProblemKind::LogisticRidge,
            dim: obj.dim(),
            matrix: None,
            rhs: None,
            data_matrix: Some(obj.data_matrix().to_rows()),
            ridge: Some(obj.ridge()),
            x0,
            ell: obj.ridge(),
            lip: obj.lipschitz_bound(),
            x_star,
            f_star,
            seed,
        })
    }

    /// Builds the objective model. A declared `x_star` is attached as given.
    pub fn to_model(&self) -> Result<ObjectiveModel> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("dim must be at least 1".into()));
        }
        check_dim(self.dim, self.x0.len())?;
        let function = match self.kind {
            ProblemKind::Quadratic => {
                let rows = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("quadratic problem needs \"matrix\"".into()))?;
                let rhs = self
                    .rhs
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("quadratic problem needs \"rhs\"".into()))?;
                check_dim(self.dim, rows.len())?;
                Function::Quadratic(QuadraticObjective::new(DenseMatrix::from_rows(rows)?, rhs)?)
            }
            ProblemKind::LogisticRidge => {
                let rows = self.data_matrix.as_ref().ok_or_else(|| {
                    Error::InvalidInput("logistic problem needs \"data_matrix\"".into())
                })?;
                let ridge = self
                    .ridge
                    .ok_or_else(|| Error::InvalidInput("logistic problem needs \"ridge\"".into()))?;
                let data = DenseMatrix::from_rows(rows)?;
                check_dim(self.dim, data.cols())?;
                Function::LogisticRidge(LogisticRidgeObjective::new(data, ridge)?)
            }
        };
        let model = ObjectiveModel::new(function, self.ell, self.lip)?;
        match &self.x_star {
            Some(x) => {
                check_dim(self.dim, x.len())?;
                model.with_minimizer(x.clone())
            }
            None => Ok(model),
        }
    }

    /// Ground truth for the identity battery: declared `x*` and the declared
    /// `ℓ`, `L` as spectral bounds.
    pub fn ground_truth(&self, model: &ObjectiveModel) -> Result<GroundTruth> {
        let x_star = self.x_star.clone().ok_or(Error::MissingGroundTruth)?;
        let f_star = model.eval(&x_star)?;
        Ok(GroundTruth {
            x_star,
            f_star,
            lambda_min: self.ell,
            lambda_max: self.lip,
        })
    }

    /// Ground truth with estimated extreme eigenvalues in place of the
    /// declared parameters.
    pub fn estimated_truth(&self, model: &ObjectiveModel) -> Result<GroundTruth> {
        let q = model
            .as_quadratic()
            .ok_or_else(|| Error::Unsupported("spectral bounds need a quadratic".into()))?;
        let (lambda_min, lambda_max) = extreme_eigenvalues(q)?;
        Ok(GroundTruth {
            lambda_min,
            lambda_max,
            ..self.ground_truth(model)?
        })
    }
}

/// Formatter writing every `f64` as `d.dddddddddddddddde±x`.
#[derive(Default)]
pub struct FullPrecision<F = PrettyFormatter<'static>> {
    inner: F,
}

impl<F: Formatter> Formatter for FullPrecision<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn end_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_key(writer)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Pretty JSON with full-precision floats and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision::<PrettyFormatter<'static>>::default());
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    from_json(&std::fs::read_to_string(path)?)
}

pub const TRACE_CSV_HEADER: &str = "k,f_gap,dist_to_opt,grad_norm,psi,psi_ratio,cert_pass,alpha,beta,rho,theta,nu,pi";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One CSV row per snapshot. `psi_ratio` and `cert_pass` on row `k` refer
/// to the step that ended at `k`; `theta`, `nu`, `pi` are the parameters of
/// that step. Columns that need `x*` are left empty when it is unknown.
pub fn trace_csv(
    obj: &ObjectiveModel,
    family: Family,
    states: &[SolverState],
    tol_cert: Option<f64>,
) -> Result<String> {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    let mut builder = if obj.minimizer().is_some() {
        Some(CertificateBuilder::new(
            obj,
            family,
            CertifyOptions {
                tol_cert,
                check_looseness: false,
            },
        )?)
    } else {
        None
    };
    for state in states {
        let grad_norm = norm(&obj.grad(&state.x)?);
        let (f_gap, dist, psi, rho, ratio, pass) = match builder.as_mut() {
            Some(b) => {
                let point = b.push(state)?.clone();
                let step = state.k.checked_sub(1).and_then(|j| b.report().steps.get(j));
                let (ratio, pass) = match step {
                    Some(s) => (num(s.ratio), s.pass.to_string()),
                    None => (String::new(), "true".to_string()),
                };
                (
                    num(point.f_gap),
                    num(point.dist_to_opt),
                    num(point.psi),
                    num(point.rho),
                    ratio,
                    pass,
                )
            }
            None => Default::default(),
        };
        let params = state.step_params;
        let row = [
            state.k.to_string(),
            f_gap,
            dist,
            num(grad_norm),
            psi,
            ratio,
            pass,
            opt(state.alpha),
            opt(state.beta),
            rho,
            opt(params.map(|p| p.theta)),
            opt(params.map(|p| p.nu)),
            opt(params.map(|p| p.pi)),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratic_gen::{generate, Layout, SpectrumSpec};
    use crate::solvers::{run, Method};

    fn diag13_spec() -> ProblemSpec {
        ProblemSpec {
            kind: ProblemKind::Quadratic,
            dim: 2,
            matrix: Some(vec![vec![1.0, 0.0], vec![0.0, 3.0]]),
            rhs: Some(vec![0.0, 0.0]),
            data_matrix: None,
            ridge: None,
            x0: vec![1.0, 1.0],
            ell: 1.0,
            lip: 3.0,
            x_star: Some(vec![0.0, 0.0]),
            f_star: Some(0.0),
            seed: None,
        }
    }

    #[test]
    fn generated_problem_round_trips() {
        let spec = SpectrumSpec {
            dim: 4,
            ell: 1.0,
            lip: 3.0,
            layout: Layout::Uniform,
            seed: 7,
        };
        let problem = ProblemSpec::from_generated(&generate(&spec).unwrap(), 7);
        let text = to_json_string(&problem).unwrap();
        let back: ProblemSpec = from_json(&text).unwrap();
        assert_eq!(back, problem);
        assert_eq!(to_json_string(&back).unwrap(), text);
    }

    #[test]
    fn floats_carry_17_digits() {
        let text = to_json_string(&[0.1f64, 1.0 / 3.0]).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
    }

    #[test]
    fn missing_fields_are_rejected() {
        let mut spec = diag13_spec();
        spec.matrix = None;
        assert!(matches!(spec.to_model(), Err(Error::InvalidInput(_))));
        let mut spec = diag13_spec();
        spec.x0 = vec![1.0];
        assert!(matches!(spec.to_model(), Err(Error::Dimension { .. })));
    }

    #[test]
    fn cg_trace_csv() {
        let spec = diag13_spec();
        let model = spec.to_model().unwrap();
        let trace = run(&model, Method::CgClassic, &spec.x0, 5, -1.0).unwrap();
        let csv = trace_csv(&model, Family::Cg, &trace.states, None).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 3);
        let psi: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
        assert!((psi[0] - 6.0).abs() < 1e-15);
        assert!((psi[1] - 29.0 / 35.0).abs() < 1e-15);
        assert!(psi[2].abs() < 1e-15);
        assert_eq!(rows[0][5], "");
        assert!(rows.iter().all(|r| r[6] == "true"));
        assert_eq!(rows[0][7], "");
        assert!(rows.iter().all(|r| r.len() == 13));
    }

    #[test]
    fn csv_without_minimizer_leaves_columns_empty() {
        let mut spec = diag13_spec();
        spec.x_star = None;
        let model = spec.to_model().unwrap();
        let trace = run(&model, Method::Ag, &spec.x0, 2, -1.0).unwrap();
        let csv = trace_csv(&model, Family::Ag, &trace.states, None).unwrap();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[1], "");
        assert!(!row[3].is_empty());
    }
}
