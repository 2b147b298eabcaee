//! CG with a noisy matrix-vector product, monitored by the exact potential.
//! A step whose potential fails to contract flags the inexactness.

use std::cell::Cell;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm, scale};
use crate::objective::{LinearOperator, ObjectiveModel, QuadraticObjective};
use crate::potential::{CertificateBuilder, CertifyOptions};
use crate::quadratic_gen::GroundTruth;
use crate::rng::SplitMix64;
use crate::solvers::{run_cg_with_operator, Family, SolverState, StopRule, Termination};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `η·‖Ap‖·u` with `u` uniform on the unit sphere.
    #[default]
    RelativeSphere,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub magnitude: f64,
    #[serde(default)]
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn relative_sphere(magnitude: f64, seed: u64) -> Result<Self> {
        if !(magnitude >= 0.0) || !magnitude.is_finite() {
            return Err(Error::InvalidInput(format!(
                "noise magnitude must be finite and nonnegative, got {magnitude}"
            )));
        }
        Ok(Self {
            magnitude,
            kind: NoiseKind::RelativeSphere,
            seed,
        })
    }
}

fn unit_vector(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    loop {
        let g = rng.gaussian_vec(n);
        let len = norm(&g);
        if len > 0.0 {
            return scale(&g, 1.0 / len);
        }
    }
}

/// `A·p + η·‖A·p‖·u`, where call `i` draws `u` from the stream
/// `(noise.seed, i)`.
pub fn noisy_matvec(q: &QuadraticObjective, noise: &NoiseModel, call_index: u64, p: &[f64]) -> Vec<f64> {
    let ap = q.matrix().matvec(p);
    if noise.magnitude == 0.0 {
        return ap;
    }
    let size = noise.magnitude * norm(&ap);
    let mut rng = SplitMix64::derived(noise.seed, call_index);
    match noise.kind {
        NoiseKind::RelativeSphere => axpy(&ap, size, &unit_vector(&mut rng, ap.len())),
    }
}

/// Operator wrapper that numbers its calls.
#[derive(Debug)]
pub struct NoisyOperator<'a> {
    q: &'a QuadraticObjective,
    noise: NoiseModel,
    calls: Cell<u64>,
}

impl<'a> NoisyOperator<'a> {
    pub fn new(q: &'a QuadraticObjective, noise: NoiseModel) -> Self {
        Self {
            q,
            noise,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.get()
    }
}

impl LinearOperator for NoisyOperator<'_> {
    fn dim(&self) -> usize {
        self.q.dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let i = self.calls.get();
        self.calls.set(i + 1);
        noisy_matvec(self.q, &self.noise, i, v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionOptions {
    /// Monitor the potential; when off only the gap trace is recorded.
    pub certify: bool,
    /// Stop once the exact gap falls to `stop_ratio·f_gap₀`.
    pub stop_ratio: f64,
    pub tol_cert: Option<f64>,
}

impl Default for DetectionOptions {
    fn default() -> Self {
        Self {
            certify: true,
            stop_ratio: 1e-10,
            tol_cert: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub eta: f64,
    pub seed: u64,
    /// Step `k` whose check `C·Ψ_{k+1} ≤ Ψ_k` (or `Ψ₁ ≤ Ψ₀`) failed first.
    pub first_violation: Option<usize>,
    pub iterations_run: usize,
    pub psi: Vec<f64>,
    pub f_gap: Vec<f64>,
    pub termination: Termination,
}

/// Runs CG through [`NoisyOperator`] for at most `max_iters` steps and stops
/// at the first certificate violation.
pub fn detect_inexactness(
    q: &QuadraticObjective,
    truth: &GroundTruth,
    noise: &NoiseModel,
    max_iters: usize,
) -> Result<DetectionReport> {
    detect_inexactness_with(q, truth, noise, max_iters, DetectionOptions::default())
}

pub fn detect_inexactness_with(
    q: &QuadraticObjective,
    truth: &GroundTruth,
    noise: &NoiseModel,
    max_iters: usize,
    options: DetectionOptions,
) -> Result<DetectionReport> {
    let x0 = vec![0.0; q.dim()];
    detect_from(q, truth, &x0, noise, max_iters, options)
}

/// [`detect_inexactness_with`] from an explicit starting point.
pub fn detect_from(
    q: &QuadraticObjective,
    truth: &GroundTruth,
    x0: &[f64],
    noise: &NoiseModel,
    max_iters: usize,
    options: DetectionOptions,
) -> Result<DetectionReport> {
    let obj = ObjectiveModel::quadratic(q.clone(), truth.lambda_min, truth.lambda_max)?
        .with_minimizer(truth.x_star.clone())?;
    let op = NoisyOperator::new(q, *noise);
    let stop = StopRule::never(&obj);
    let mut builder = if options.certify {
        Some(CertificateBuilder::new(
            &obj,
            Family::Cg,
            CertifyOptions {
                tol_cert: options.tol_cert,
                check_looseness: false,
            },
        )?)
    } else {
        None
    };
    let mut f_gap = Vec::new();
    let mut iterations_run = 0;
    let mut failure: Option<Error> = None;
    let mut gap_floor = None;

    let visit = |state: &SolverState| {
        iterations_run = state.k;
        let gap = match builder.as_mut() {
            Some(b) => match b.push(state) {
                Ok(point) => point.f_gap,
                Err(e) => {
                    failure = Some(e);
                    return ControlFlow::Break(());
                }
            },
            None => match obj.gap(&state.x) {
                Ok(g) => g,
                Err(e) => {
                    failure = Some(e);
                    return ControlFlow::Break(());
                }
            },
        };
        f_gap.push(gap);
        let floor = *gap_floor.get_or_insert(options.stop_ratio * gap);
        if builder.as_ref().is_some_and(|b| b.first_violation().is_some()) || gap <= floor {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };
    let start = SolverState::initial(x0.to_vec());
    let termination = run_cg_with_operator(q, &op, start, max_iters, &stop, visit)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (first_violation, psi) = match builder {
        Some(b) => {
            let report = b.finish();
            (
                report.first_violation,
                report.points.iter().map(|p| p.psi).collect(),
            )
        }
        None => (None, Vec::new()),
    };
    Ok(DetectionReport {
        eta: noise.magnitude,
        seed: noise.seed,
        first_violation,
        iterations_run,
        psi,
        f_gap,
        termination,
    })
}

/// Runs [`detect_inexactness_with`] for every `(eta, seed)` pair in parallel.
/// Results are ordered by `eta`, then `seed`.
pub fn sweep(
    q: &QuadraticObjective,
    truth: &GroundTruth,
    x0: &[f64],
    etas: &[f64],
    seeds: &[u64],
    max_iters: usize,
    options: DetectionOptions,
) -> Result<Vec<DetectionReport>> {
    let mut jobs = Vec::with_capacity(etas.len() * seeds.len());
    for &eta in etas {
        for &seed in seeds {
            jobs.push(NoiseModel::relative_sphere(eta, seed)?);
        }
    }
    jobs.sort_by(|a, b| a.magnitude.total_cmp(&b.magnitude).then(a.seed.cmp(&b.seed)));
    jobs.dedup();
    jobs.par_iter()
        .map(|noise| detect_from(q, truth, x0, noise, max_iters, options))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sub, DenseMatrix};
    use crate::quadratic_gen::{generate, Layout, SpectrumSpec};

    fn diag13() -> QuadraticObjective {
        QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 3.0]), vec![0.0; 2]).unwrap()
    }

    #[test]
    fn zero_noise_is_exact() {
        let q = diag13();
        let noise = NoiseModel::relative_sphere(0.0, 9).unwrap();
        let p = [0.3, -1.7];
        assert_eq!(noisy_matvec(&q, &noise, 4, &p), q.matrix().matvec(&p));
    }

    #[test]
    fn zero_vector_stays_zero() {
        let q = diag13();
        let noise = NoiseModel::relative_sphere(0.5, 1).unwrap();
        assert_eq!(noisy_matvec(&q, &noise, 0, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let q = diag13();
        let noise = NoiseModel::relative_sphere(1e-3, 77).unwrap();
        let out = noisy_matvec(&q, &noise, 3, &[1.0, 1.0]);
        let exact = [1.0, 3.0];
        let rel = norm(&sub(&out, &exact)) / norm(&exact);
        assert!(rel <= 1e-3 * (1.0 + 1e-12) && rel > 0.0);
        assert_eq!(out, noisy_matvec(&q, &noise, 3, &[1.0, 1.0]));
        assert_ne!(out, noisy_matvec(&q, &noise, 4, &[1.0, 1.0]));
    }

    #[test]
    fn rejects_negative_magnitude() {
        assert!(NoiseModel::relative_sphere(-1.0, 0).is_err());
        assert!(NoiseModel::relative_sphere(f64::NAN, 0).is_err());
    }

    #[test]
    fn exact_run_has_no_violation() {
        let problem = generate(&SpectrumSpec {
            dim: 50,
            ell: 1.0,
            lip: 100.0,
            layout: Layout::LogUniform,
            seed: 5,
        })
        .unwrap();
        let noise = NoiseModel::relative_sphere(0.0, 1).unwrap();
        let report = detect_inexactness(&problem.objective, &problem.truth, &noise, 60).unwrap();
        assert_eq!(report.first_violation, None);
        assert!(report.iterations_run > 0);
        assert_eq!(report.psi.len(), report.f_gap.len());
    }

    #[test]
    fn certification_can_be_disabled() {
        let problem = generate(&SpectrumSpec {
            dim: 20,
            ell: 1.0,
            lip: 1e4,
            layout: Layout::LogUniform,
            seed: 2,
        })
        .unwrap();
        let noise = NoiseModel::relative_sphere(1e-2, 3).unwrap();
        let options = DetectionOptions {
            certify: false,
            ..DetectionOptions::default()
        };
        let report =
            detect_inexactness_with(&problem.objective, &problem.truth, &noise, 40, options).unwrap();
        assert!(report.psi.is_empty());
        assert_eq!(report.first_violation, None);
        assert!(!report.f_gap.is_empty());
    }

    #[test]
    fn sweep_is_ordered() {
        let problem = generate(&SpectrumSpec {
            dim: 10,
            ell: 1.0,
            lip: 10.0,
            layout: Layout::Uniform,
            seed: 8,
        })
        .unwrap();
        let reports = sweep(
            &problem.objective,
            &problem.truth,
            &problem.x0,
            &[1e-2, 0.0],
            &[2, 1],
            30,
            DetectionOptions::default(),
        )
        .unwrap();
        let keys: Vec<(f64, u64)> = reports.iter().map(|r| (r.eta, r.seed)).collect();
        assert_eq!(keys, vec![(0.0, 1), (0.0, 2), (1e-2, 1), (1e-2, 2)]);
    }
}
