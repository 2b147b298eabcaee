//! Smooth strongly convex objectives and checks of the two-sided quadratic
//! sandwich `ℓ‖x−y‖²/2 ≤ f(y) − f(x) − ∇f(x)ᵀ(y−x) ≤ L‖x−y‖²/2`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, axpy, dot, dot_compensated, norm, norm_sq, sub, Cholesky, DenseMatrix};
use crate::rng::SplitMix64;

/// Relative slack for the sandwich and descent-lemma checks.
pub const VALIDATION_SLACK: f64 = 1e-9;

/// Something that can apply a symmetric matrix to a vector.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;
}

/// `f(x) = xᵀAx/2 − bᵀx` with `A` symmetric positive definite.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticObjective {
    matrix: DenseMatrix,
    rhs: Vec<f64>,
}

impl QuadraticObjective {
    /// Validates symmetry to `1e-12·max|A_ij|`, symmetrizes, and checks
    /// positive definiteness with a Cholesky factorization.
    pub fn new(mut matrix: DenseMatrix, rhs: Vec<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidInput(format!(
                "matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if matrix.rows() == 0 {
            return Err(Error::InvalidInput("matrix must be nonempty".into()));
        }
        check_dim(matrix.rows(), rhs.len())?;
        let tol = 1e-12 * matrix.max_abs();
        let asym = matrix.asymmetry();
        if asym > tol {
            return Err(Error::InvalidInput(format!(
                "matrix is not symmetric (max |A_ij - A_ji| = {asym:e}, tolerance {tol:e})"
            )));
        }
        matrix.symmetrize();
        Cholesky::new(&matrix)?;
        Ok(Self { matrix, rhs })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let ax = self.matrix.matvec(x);
        Ok(0.5 * dot(x, &ax) - dot(&self.rhs, x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(sub(&self.matrix.matvec(x), &self.rhs))
    }

    /// `r = b − Ax`
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(sub(&self.rhs, &self.matrix.matvec(x)))
    }

    /// `(x − x*)ᵀA(x − x*)/2`, which equals `f(x) − f(x*)` without the
    /// cancellation of subtracting two objective values.
    pub fn gap_from(&self, x: &[f64], x_star: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let e = sub(x, x_star);
        Ok(0.5 * self.a_norm_sq(&e))
    }

    /// `vᵀAv`
    pub fn a_norm_sq(&self, v: &[f64]) -> f64 {
        dot(v, &self.matrix.matvec(v))
    }
}

impl LinearOperator for QuadraticObjective {
    fn dim(&self) -> usize {
        self.rhs.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.matvec(v)
    }
}

/// `f(x) = (μ/2)‖x‖² + Σᵢ log(1 + exp(aᵢᵀx))`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticRidgeObjective {
    data_matrix: DenseMatrix,
    ridge: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `Σ_{n≥2} κₙ δⁿ/n!` with `κₙ` the Bernoulli(p) cumulants, truncated
/// after `n = 6`.
fn excess_series(p: f64, d: f64) -> f64 {
    let v = p * (1.0 - p);
    let k3 = v * (1.0 - 2.0 * p);
    let k4 = v * (1.0 - 6.0 * v);
    let k5 = k3 * (1.0 - 12.0 * v);
    let k6 = v * (1.0 - 30.0 * v + 120.0 * v * v);
    d * d * (v / 2.0 + d * (k3 / 6.0 + d * (k4 / 24.0 + d * (k5 / 120.0 + d * k6 / 720.0))))
}

fn excess_direct(p: f64, d: f64) -> f64 {
    (p * d.exp_m1()).ln_1p() - p * d
}

/// `softplus(z + δ) − softplus(z) − σ(z)δ`, evaluated without cancellation.
fn softplus_excess(z: f64, delta: f64) -> f64 {
    // the expression is unchanged under (z, δ) → (−z, −δ)
    let (z, delta) = if z > 0.0 { (-z, -delta) } else { (z, delta) };
    let p = sigmoid(z);
    if delta.abs() < 1e-2 {
        excess_series(p, delta)
    } else if delta > 30.0 {
        softplus(z + delta) - softplus(z) - p * delta
    } else {
        excess_direct(p, delta)
    }
}

impl LogisticRidgeObjective {
    pub fn new(data_matrix: DenseMatrix, ridge: f64) -> Result<Self> {
        if !(ridge > 0.0) || !ridge.is_finite() {
            return Err(Error::InvalidInput(format!("ridge must be positive, got {ridge}")));
        }
        if data_matrix.cols() == 0 {
            return Err(Error::InvalidInput("data matrix has no columns".into()));
        }
        Ok(Self { data_matrix, ridge })
    }

    /// Gaussian data matrix with `rows` samples drawn from `seed`.
    pub fn generate(rows: usize, dim: usize, ridge: f64, seed: u64) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidInput("rows and dim must be positive".into()));
        }
        let mut rng = SplitMix64::new(seed);
        let data: Vec<Vec<f64>> = (0..rows).map(|_| rng.gaussian_vec(dim)).collect();
        Self::new(DenseMatrix::from_rows(&data)?, ridge)
    }

    pub fn data_matrix(&self) -> &DenseMatrix {
        &self.data_matrix
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.data_matrix.cols()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let z = self.data_matrix.matvec(x);
        Ok(0.5 * self.ridge * norm_sq(x) + z.iter().map(|&zi| softplus(zi)).sum::<f64>())
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let weights: Vec<f64> = self.data_matrix.matvec(x).into_iter().map(sigmoid).collect();
        let g = self.data_matrix.matvec_transposed(&weights);
        Ok(axpy(&g, self.ridge, x))
    }

    /// `f(x) − f(x*)` as `Σᵢ e(aᵢᵀx*, aᵢᵀd) + (μ/2)‖d‖² + ∇f(x*)ᵀd` with
    /// `d = x − x*` and `e` the softplus excess over its tangent, so the
    /// result keeps its relative accuracy as `x → x*`.
    pub fn gap_from(&self, x: &[f64], x_star: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), x_star.len())?;
        let d = sub(x, x_star);
        let z = self.data_matrix.matvec(x_star);
        let delta = self.data_matrix.matvec(&d);
        let curvature: f64 = z.iter().zip(&delta).map(|(&zi, &di)| softplus_excess(zi, di)).sum();
        let slope = dot_compensated(&self.grad(x_star)?, &d);
        Ok(curvature + 0.5 * self.ridge * norm_sq(&d) + slope)
    }

    /// `μI + Dᵀ diag(σ(1−σ)) D`
    fn hessian(&self, x: &[f64]) -> DenseMatrix {
        let n = self.dim();
        let z = self.data_matrix.matvec(x);
        let mut h = DenseMatrix::identity(n);
        for i in 0..n {
            h[(i, i)] = self.ridge;
        }
        for (row, zi) in z.iter().enumerate() {
            let s = sigmoid(*zi);
            let w = s * (1.0 - s);
            let a = self.data_matrix.row(row);
            for i in 0..n {
                let wa = w * a[i];
                for j in 0..n {
                    h[(i, j)] += wa * a[j];
                }
            }
        }
        h
    }

    fn polish(&self, mut x: Vec<f64>) -> Vec<f64> {
        let Ok(mut g) = self.grad(&x) else { return x };
        for _ in 0..10 {
            let Ok(chol) = Cholesky::new(&self.hessian(&x)) else { break };
            let trial = axpy(&x, -1.0, &chol.solve(&g));
            let Ok(g_trial) = self.grad(&trial) else { break };
            if norm(&g_trial) >= norm(&g) {
                break;
            }
            x = trial;
            g = g_trial;
        }
        x
    }

    /// Upper curvature bound `μ + ‖D‖₂²/4`, with `‖D‖₂²` from power iteration
    /// on `DᵀD` (200 iterations or relative change below 1e-12).
    pub fn lipschitz_bound(&self) -> f64 {
        let n = self.dim();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut estimate = 0.0;
        for _ in 0..200 {
            let w = self.data_matrix.matvec_transposed(&self.data_matrix.matvec(&v));
            let next = dot(&v, &w);
            let w_norm = norm(&w);
            if w_norm == 0.0 {
                break;
            }
            v = linalg::scale(&w, 1.0 / w_norm);
            let converged = (next - estimate).abs() <= 1e-12 * next.abs();
            estimate = next;
            if converged {
                break;
            }
        }
        self.ridge + estimate / 4.0
    }

    /// Damped Newton iteration from `start` until the gradient norm drops to
    /// `1e-12` times its initial value, followed by full Newton steps for as
    /// long as they keep reducing the gradient norm.
    pub fn reference_minimizer(&self, start: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), start.len())?;
        let mut x = start.to_vec();
        let mut g = self.grad(&x)?;
        let target = 1e-12 * norm(&g);
        let mut fx = self.eval(&x)?;
        for _ in 0..200 {
            if norm(&g) <= target {
                return Ok(self.polish(x));
            }
            let step = Cholesky::new(&self.hessian(&x))?.solve(&g);
            let slope = dot(&g, &step);
            let mut t = 1.0;
            loop {
                let trial = axpy(&x, -t, &step);
                let f_trial = self.eval(&trial)?;
                let accept = f_trial <= fx - 1e-4 * t * slope
                    || t < 1e-10
                    // near x* the decrease in f is below roundoff
                    || (t == 1.0 && norm(&self.grad(&trial)?) <= 0.5 * norm(&g));
                if accept {
                    x = trial;
                    fx = f_trial;
                    break;
                }
                t *= 0.5;
            }
            g = self.grad(&x)?;
        }
        if norm(&g) <= target {
            Ok(self.polish(x))
        } else {
            Err(Error::InvalidInput(format!(
                "reference Newton run stalled at gradient norm {:e} (target {target:e})",
                norm(&g)
            )))
        }
    }
}

/// The concrete function behind an [`ObjectiveModel`].
#[derive(Clone, Debug, PartialEq)]
pub enum Function {
    Quadratic(QuadraticObjective),
    LogisticRidge(LogisticRidgeObjective),
}

impl Function {
    pub fn dim(&self) -> usize {
        match self {
            Function::Quadratic(q) => q.dim(),
            Function::LogisticRidge(l) => l.dim(),
        }
    }
}

/// A smooth strongly convex objective with its convexity parameters and,
/// when known, its minimizer. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveModel {
    function: Function,
    ell: f64,
    lip: f64,
    minimizer: Option<Vec<f64>>,
    min_value: Option<f64>,
}

impl ObjectiveModel {
    pub fn new(function: Function, ell: f64, lip: f64) -> Result<Self> {
        if !(ell > 0.0) || !ell.is_finite() || !lip.is_finite() {
            return Err(Error::InvalidInput(format!(
                "need finite ell > 0, got ell = {ell}, L = {lip}"
            )));
        }
        if lip < ell {
            return Err(Error::InvalidInput(format!("need L >= ell, got ell = {ell}, L = {lip}")));
        }
        Ok(Self {
            function,
            ell,
            lip,
            minimizer: None,
            min_value: None,
        })
    }

    pub fn quadratic(q: QuadraticObjective, ell: f64, lip: f64) -> Result<Self> {
        Self::new(Function::Quadratic(q), ell, lip)
    }

    /// Attaches `x*`; `f(x*)` is evaluated from it.
    pub fn with_minimizer(mut self, x_star: Vec<f64>) -> Result<Self> {
        let value = self.eval(&x_star)?;
        self.minimizer = Some(x_star);
        self.min_value = Some(value);
        Ok(self)
    }

    /// Like [`with_minimizer`](Self::with_minimizer) but first checks
    /// `‖∇f(x*)‖ ≤ 1e-10·max(1, ‖∇f(x₀)‖)`.
    pub fn with_checked_minimizer(self, x_star: Vec<f64>, x0: &[f64]) -> Result<Self> {
        let g_star = norm(&self.grad(&x_star)?);
        let g0 = norm(&self.grad(x0)?);
        let bound = 1e-10 * g0.max(1.0);
        if g_star > bound {
            return Err(Error::InvalidInput(format!(
                "declared minimizer has gradient norm {g_star:e} > {bound:e}"
            )));
        }
        self.with_minimizer(x_star)
    }

    pub fn function(&self) -> &Function {
        &self.function
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        match &self.function {
            Function::Quadratic(q) => Some(q),
            Function::LogisticRidge(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.function.dim()
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    /// `L/ℓ`
    pub fn kappa(&self) -> f64 {
        self.lip / self.ell
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    pub fn min_value(&self) -> Option<f64> {
        self.min_value
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match &self.function {
            Function::Quadratic(q) => q.eval(x),
            Function::LogisticRidge(l) => l.eval(x),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.function {
            Function::Quadratic(q) => q.grad(x),
            Function::LogisticRidge(l) => l.grad(x),
        }
    }

    /// `f(x) − f(x*)`, computed in error form around `x*`.
    pub fn gap(&self, x: &[f64]) -> Result<f64> {
        let x_star = self.minimizer.as_deref().ok_or(Error::MissingGroundTruth)?;
        match &self.function {
            Function::Quadratic(q) => q.gap_from(x, x_star),
            Function::LogisticRidge(l) => l.gap_from(x, x_star),
        }
    }

    /// `‖x − x*‖`
    pub fn dist_to_opt(&self, x: &[f64]) -> Result<f64> {
        let x_star = self.minimizer().ok_or(Error::MissingGroundTruth)?;
        check_dim(x_star.len(), x.len())?;
        Ok(norm(&sub(x, x_star)))
    }
}

/// Both sides of the sandwich inequality at a pair of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRecord {
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
    pub pass: bool,
}

pub fn validate_sandwich(obj: &ObjectiveModel, x: &[f64], y: &[f64]) -> Result<SandwichRecord> {
    check_dim(obj.dim(), x.len())?;
    check_dim(obj.dim(), y.len())?;
    let d = sub(y, x);
    let dist_sq = norm_sq(&d);
    let middle = match obj.function() {
        // exact Taylor expansion
        Function::Quadratic(q) => 0.5 * q.a_norm_sq(&d),
        Function::LogisticRidge(_) => obj.eval(y)? - obj.eval(x)? - dot(&obj.grad(x)?, &d),
    };
    let lower = 0.5 * obj.ell() * dist_sq;
    let upper = 0.5 * obj.lip() * dist_sq;
    let slack = VALIDATION_SLACK * lower.abs().max(middle.abs()).max(upper.abs());
    let pass = lower <= middle + slack && middle <= upper + slack;
    Ok(SandwichRecord {
        lower,
        middle,
        upper,
        pass,
    })
}

/// Both sides of `f(y) − f(y − ∇f(y)/L) ≥ ‖∇f(y)‖²/(2L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentRecord {
    pub decrease: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn check_descent_lemma(obj: &ObjectiveModel, y: &[f64]) -> Result<DescentRecord> {
    let g = obj.grad(y)?;
    let lip = obj.lip();
    let g_sq = norm_sq(&g);
    let bound = g_sq / (2.0 * lip);
    let (decrease, roundoff) = match obj.function() {
        // f(y) − f(y − g/L) = gᵀg/L − gᵀAg/(2L²)
        Function::Quadratic(q) => (g_sq / lip - q.a_norm_sq(&g) / (2.0 * lip * lip), 0.0),
        Function::LogisticRidge(_) => {
            let fy = obj.eval(y)?;
            let f_next = obj.eval(&axpy(y, -1.0 / lip, &g))?;
            (fy - f_next, 8.0 * f64::EPSILON * fy.abs().max(f_next.abs()))
        }
    };
    let slack = VALIDATION_SLACK * decrease.abs().max(bound.abs()) + roundoff;
    Ok(DescentRecord {
        decrease,
        bound,
        pass: decrease + slack >= bound,
    })
}
