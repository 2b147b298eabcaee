//! SPD test problems with a prescribed spectrum, plus dense reference
//! routines for the ground truth (minimizer, optimal value, extreme
//! eigenvalues).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, dot_compensated, norm, scale, sub, Cholesky, DenseMatrix};
use crate::objective::QuadraticObjective;
use crate::rng::SplitMix64;

/// Placement of the eigenvalues between `ell` and `lip`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `exp(u)` with `u` equally spaced in `[ln ell, ln lip]`.
    LogUniform,
    /// Equally spaced in `[ell, lip]`.
    Uniform,
    /// `⌈dim/2⌉` copies of `ell`, the rest at `lip`.
    TwoCluster,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "log_uniform" => Ok(Layout::LogUniform),
            "uniform" => Ok(Layout::Uniform),
            "two_cluster" => Ok(Layout::TwoCluster),
            other => Err(Error::InvalidInput(format!("unknown layout {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub dim: usize,
    pub ell: f64,
    pub lip: f64,
    pub layout: Layout,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// A generated problem: the objective, its ground truth, and a seeded
/// starting point.
#[derive(Clone, Debug)]
pub struct GeneratedProblem {
    pub objective: QuadraticObjective,
    pub truth: GroundTruth,
    pub x0: Vec<f64>,
}

impl SpectrumSpec {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("dim must be at least 1".into()));
        }
        if !(self.ell > 0.0) || !self.ell.is_finite() || !self.lip.is_finite() {
            return Err(Error::InvalidInput(format!("need finite ell > 0, got {}", self.ell)));
        }
        if self.lip < self.ell {
            return Err(Error::InvalidInput(format!(
                "need lip >= ell, got ell = {}, lip = {}",
                self.ell, self.lip
            )));
        }
        if self.dim == 1 && self.lip != self.ell {
            return Err(Error::InvalidInput(
                "a 1-dimensional spectrum cannot have distinct endpoints".into(),
            ));
        }
        Ok(())
    }

    /// Eigenvalues in ascending order, endpoints exactly `ell` and `lip`.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.dim;
        if n == 1 {
            return Ok(vec![self.ell]);
        }
        let last = (n - 1) as f64;
        let mut values: Vec<f64> = match self.layout {
            Layout::LogUniform => {
                let (lo, hi) = (self.ell.ln(), self.lip.ln());
                (0..n).map(|i| (lo + (hi - lo) * i as f64 / last).exp()).collect()
            }
            Layout::Uniform => (0..n)
                .map(|i| self.ell + (self.lip - self.ell) * i as f64 / last)
                .collect(),
            Layout::TwoCluster => {
                let low = n.div_ceil(2);
                (0..n).map(|i| if i < low { self.ell } else { self.lip }).collect()
            }
        };
        values[0] = self.ell;
        values[n - 1] = self.lip;
        Ok(values)
    }
}

/// Product of `dim` Householder reflectors built from Gaussian vectors.
pub fn random_orthogonal(dim: usize, rng: &mut SplitMix64) -> DenseMatrix {
    let mut q = DenseMatrix::identity(dim);
    for _ in 0..dim {
        let v = rng.gaussian_vec(dim);
        let v_sq = dot(&v, &v);
        if v_sq == 0.0 {
            continue;
        }
        // Q ← Q (I − 2vvᵀ/vᵀv)
        let qv = q.matvec(&v);
        let c = 2.0 / v_sq;
        for i in 0..dim {
            let qi = c * qv[i];
            for j in 0..dim {
                q[(i, j)] -= qi * v[j];
            }
        }
    }
    q
}

/// Builds `A = QΛQᵀ` and a Gaussian right-hand side from the spec's seed.
///
/// Draw order on the single stream: `dim` reflector vectors of `dim`
/// Gaussians each, then `b`, then `x₀`.
pub fn generate(spec: &SpectrumSpec) -> Result<GeneratedProblem> {
    let eigenvalues = spec.eigenvalues()?;
    let n = spec.dim;
    let mut rng = SplitMix64::new(spec.seed);
    let q = random_orthogonal(n, &mut rng);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = (0..n).map(|k| q[(i, k)] * eigenvalues[k] * q[(j, k)]).sum();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let rhs = rng.gaussian_vec(n);
    let x0 = rng.gaussian_vec(n);
    let objective = QuadraticObjective::new(a, rhs)?;
    let x_star = reference_minimizer(&objective)?;
    let f_star = objective.eval(&x_star)?;
    Ok(GeneratedProblem {
        truth: GroundTruth {
            x_star,
            f_star,
            lambda_min: spec.ell,
            lambda_max: spec.lip,
        },
        objective,
        x0,
    })
}

/// Solves `Ax = b` by Cholesky plus one refinement step whose residual is
/// accumulated in double-double.
pub fn reference_minimizer(obj: &QuadraticObjective) -> Result<Vec<f64>> {
    let chol = Cholesky::new(obj.matrix())?;
    let mut x = chol.solve(obj.rhs());
    let residual = accurate_residual(obj, &x);
    let correction = chol.solve(&residual);
    for (xi, ci) in x.iter_mut().zip(&correction) {
        *xi += ci;
    }
    Ok(x)
}

fn accurate_residual(obj: &QuadraticObjective, x: &[f64]) -> Vec<f64> {
    let a = obj.matrix();
    let mut row = Vec::with_capacity(x.len() + 1);
    let mut xs = Vec::with_capacity(x.len() + 1);
    obj.rhs()
        .iter()
        .enumerate()
        .map(|(i, bi)| {
            row.clear();
            xs.clear();
            row.extend(a.row(i).iter().map(|v| -v));
            xs.extend_from_slice(x);
            row.push(*bi);
            xs.push(1.0);
            dot_compensated(&row, &xs)
        })
        .collect()
}

const EIGEN_MAX_ITERS: usize = 100_000;

/// `(λ_min, λ_max)` of an SPD matrix: power iteration for the top end and
/// inverse iteration (through a Cholesky factor) for the bottom end.
pub fn extreme_eigenvalues(obj: &QuadraticObjective) -> Result<(f64, f64)> {
    let a = obj.matrix();
    let n = obj.dim();
    if n == 1 {
        return Ok((a[(0, 0)], a[(0, 0)]));
    }
    let chol = Cholesky::new(a)?;
    let start = SplitMix64::new(0x005e_ed0f_e16e).gaussian_vec(n);
    let top = power_iteration(&start, |v| a.matvec(v));
    let bottom = power_iteration(&start, |v| chol.solve(v));
    match (top, bottom) {
        (Ok(hi), Ok(inv_lo)) => Ok((1.0 / inv_lo, hi)),
        (top, bottom) => {
            let hi = top.unwrap_or_else(|e| e);
            let lo = 1.0 / bottom.unwrap_or_else(|e| e);
            Err(Error::Estimation {
                lambda_min: lo,
                lambda_max: hi,
                iterations: EIGEN_MAX_ITERS,
            })
        }
    }
}

/// Dominant eigenvalue of a symmetric positive operator. `Err` carries the
/// best Rayleigh quotient when the budget runs out.
fn power_iteration(start: &[f64], op: impl Fn(&[f64]) -> Vec<f64>) -> std::result::Result<f64, f64> {
    let mut v = scale(start, 1.0 / norm(start));
    let mut best = f64::NEG_INFINITY;
    let mut stalled = 0;
    for _ in 0..EIGEN_MAX_ITERS {
        let w = op(&v);
        let next = dot(&v, &w);
        let res = norm(&sub(&w, &scale(&v, next)));
        // For unit v, some eigenvalue lies within ‖Av − μv‖ of μ.
        if res <= 1e-10 * next.abs() {
            return Ok(next);
        }
        // The Rayleigh quotient only grows; once it stops, a clustered top
        // of the spectrum has been reached even if v keeps turning.
        if next > best + 1e-13 * next.abs() {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 50 {
                return Ok(best.max(next));
            }
        }
        best = best.max(next);
        v = scale(&w, 1.0 / norm(&w));
    }
    Err(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, ell: f64, lip: f64, layout: Layout, seed: u64) -> SpectrumSpec {
        SpectrumSpec {
            dim,
            ell,
            lip,
            layout,
            seed,
        }
    }

    #[test]
    fn one_dimensional_spectrum() {
        for layout in [Layout::LogUniform, Layout::Uniform, Layout::TwoCluster] {
            let p = generate(&spec(1, 2.0, 2.0, layout, 3)).unwrap();
            assert_eq!(p.objective.matrix()[(0, 0)], 2.0);
        }
    }

    #[test]
    fn two_cluster_split() {
        let s = spec(5, 1.0, 100.0, Layout::TwoCluster, 1);
        assert_eq!(s.eigenvalues().unwrap(), vec![1.0, 1.0, 1.0, 100.0, 100.0]);
        let p = generate(&s).unwrap();
        let mut eig = nalgebra_eigenvalues(p.objective.matrix());
        eig.sort_by(f64::total_cmp);
        for (got, want) in eig.iter().zip([1.0, 1.0, 1.0, 100.0, 100.0]) {
            assert!((got - want).abs() < 1e-10 * want, "{eig:?}");
        }
    }

    #[test]
    fn endpoints_forced() {
        for layout in [Layout::LogUniform, Layout::Uniform] {
            let ev = spec(7, 0.3, 41.0, layout, 0).eigenvalues().unwrap();
            assert_eq!(ev[0], 0.3);
            assert_eq!(ev[6], 41.0);
            assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let s = spec(12, 1.0, 50.0, Layout::LogUniform, 99);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.x0, b.x0);
        let c = generate(&SpectrumSpec { seed: 100, ..s }).unwrap();
        assert_ne!(a.objective, c.objective);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&spec(0, 1.0, 2.0, Layout::Uniform, 0)).is_err());
        assert!(generate(&spec(3, 0.0, 2.0, Layout::Uniform, 0)).is_err());
        assert!(generate(&spec(3, -1.0, 2.0, Layout::Uniform, 0)).is_err());
        assert!(generate(&spec(3, 3.0, 2.0, Layout::Uniform, 0)).is_err());
    }

    #[test]
    fn reference_minimizer_examples() {
        let eye = QuadraticObjective::new(DenseMatrix::identity(2), vec![3.0, 4.0]).unwrap();
        assert_eq!(reference_minimizer(&eye).unwrap(), vec![3.0, 4.0]);
        let d = QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 3.0]), vec![2.0, 3.0]).unwrap();
        assert_eq!(reference_minimizer(&d).unwrap(), vec![2.0, 1.0]);
        let z = QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 3.0]), vec![0.0, 0.0]).unwrap();
        assert_eq!(reference_minimizer(&z).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn reference_minimizer_residual() {
        let p = generate(&spec(80, 1.0, 1e6, Layout::LogUniform, 4)).unwrap();
        let a = p.objective.matrix();
        let x = &p.truth.x_star;
        let r = norm(&sub(&a.matvec(x), p.objective.rhs()));
        let b_norm = norm(p.objective.rhs());
        assert!(r <= 1e-12 * (a.frobenius_norm() * norm(x) + b_norm));
        assert!(r <= 1e-10 * b_norm);
    }

    #[test]
    fn f_star_matches_eval() {
        let p = generate(&spec(30, 1.0, 1e3, Layout::Uniform, 8)).unwrap();
        let f0 = p.objective.eval(&p.x0).unwrap();
        let f_star = p.objective.eval(&p.truth.x_star).unwrap();
        assert!((f_star - p.truth.f_star).abs() <= 1e-10 * f0.abs().max(1.0));
    }

    #[test]
    fn extreme_eigenvalues_examples() {
        let d = QuadraticObjective::new(DenseMatrix::from_diag(&[1.0, 3.0]), vec![0.0; 2]).unwrap();
        let (lo, hi) = extreme_eigenvalues(&d).unwrap();
        assert!((lo - 1.0).abs() < 1e-8 && (hi - 3.0).abs() < 3e-8);
        let eye = QuadraticObjective::new(DenseMatrix::identity(4), vec![0.0; 4]).unwrap();
        let (lo, hi) = extreme_eigenvalues(&eye).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
    }

    #[test]
    fn extreme_eigenvalues_match_declared() {
        for layout in [Layout::LogUniform, Layout::Uniform, Layout::TwoCluster] {
            for dim in [10, 50] {
                let p = generate(&spec(dim, 1.0, 100.0, layout, 21)).unwrap();
                let (lo, hi) = extreme_eigenvalues(&p.objective).unwrap();
                assert!((lo - 1.0).abs() <= 1e-6, "{layout:?} {dim}: {lo}");
                assert!((hi - 100.0).abs() <= 1e-6 * 100.0, "{layout:?} {dim}: {hi}");
            }
        }
    }

    #[test]
    fn householder_product_is_orthogonal() {
        for dim in [1, 2, 10, 50] {
            let q = random_orthogonal(dim, &mut SplitMix64::new(dim as u64));
            let qtq = q.transpose().matmul(&q);
            let mut err = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    let target = if i == j { 1.0 } else { 0.0 };
                    err += (qtq[(i, j)] - target).powi(2);
                }
            }
            assert!(err.sqrt() <= 1e-12 * dim as f64, "dim {dim}: {}", err.sqrt());
        }
    }

    fn nalgebra_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
        let n = a.rows();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
        m.symmetric_eigen().eigenvalues.iter().copied().collect()
    }
}
