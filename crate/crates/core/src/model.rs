//! The linear model `y = Xβ + u`, the hypothesis `Rβ = r`, covariance
//! families for the disturbances, and exact Gaussian sampling.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, MEMBERSHIP_TOL};

/// Design, hypothesis and (optionally) an observation.
///
/// `(X'X)⁻¹` and the OLS map `(X'X)⁻¹X'` are computed once at construction;
/// every statistic evaluation reuses them.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    r_mat: DMatrix<f64>,
    r_vec: DVector<f64>,
    y: Option<DVector<f64>>,
    xtx_inv: DMatrix<f64>,
    ols: DMatrix<f64>,
    /// `(Q', U'⁻¹r)` from `R' = QU`: the same null set with orthonormal rows.
    r_orth: DMatrix<f64>,
    r_vec_orth: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, r_mat: DMatrix<f64>, r_vec: DVector<f64>) -> Result<Self> {
        let (n, k) = x.shape();
        if n <= 2 {
            return Err(Error::InvalidDesign(format!("need n > 2 observations, got n = {n}")));
        }
        if k < 1 || k >= n {
            return Err(Error::InvalidDesign(format!("need 1 ≤ k < n, got k = {k}, n = {n}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign("X contains non-finite entries".into()));
        }
        if linalg::numerical_rank(&x) < k {
            return Err(Error::InvalidDesign(format!("X does not have full column rank {k}")));
        }
        let q = r_mat.nrows();
        if r_mat.ncols() != k {
            return Err(Error::Dimension(format!(
                "R has {} columns but X has {k}",
                r_mat.ncols()
            )));
        }
        if q < 1 || q > k {
            return Err(Error::InvalidHypothesis(format!("need 1 ≤ q ≤ k, got q = {q}, k = {k}")));
        }
        if r_vec.len() != q {
            return Err(Error::Dimension(format!("r has length {} but R has {q} rows", r_vec.len())));
        }
        if linalg::numerical_rank(&r_mat) < q {
            return Err(Error::InvalidHypothesis(format!("R does not have full row rank {q}")));
        }
        let xtx = x.transpose() * &x;
        let xtx_inv = xtx
            .cholesky()
            .ok_or_else(|| Error::InvalidDesign("X'X is not positive definite".into()))?
            .inverse();
        let ols = &xtx_inv * x.transpose();
        let qr = r_mat.transpose().qr();
        let r_orth = qr.q().transpose();
        let r_vec_orth = qr
            .r()
            .transpose()
            .solve_lower_triangular(&r_vec)
            .ok_or_else(|| Error::InvalidHypothesis("R does not have full row rank".into()))?;
        Ok(Self { x, r_mat, r_vec, y: None, xtx_inv, ols, r_orth, r_vec_orth })
    }

    pub fn with_y(mut self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!("y has length {} but X has {} rows", y.len(), self.n())));
        }
        self.y = Some(y);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.r_mat.nrows()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn r_matrix(&self) -> &DMatrix<f64> {
        &self.r_mat
    }

    pub fn r_vector(&self) -> &DVector<f64> {
        &self.r_vec
    }

    /// Equivalent hypothesis `Q'β = r̃` with orthonormal rows; the statistic
    /// is computed from this form so that its accuracy does not depend on
    /// the conditioning of `R`.
    pub fn orthonormal_hypothesis(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.r_orth, &self.r_vec_orth)
    }

    pub fn y(&self) -> Option<&DVector<f64>> {
        self.y.as_ref()
    }

    pub fn xtx_inv(&self) -> &DMatrix<f64> {
        &self.xtx_inv
    }

    pub fn beta_hat(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.ols * y
    }

    pub fn residuals(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.x * self.beta_hat(y)
    }

    /// Whether `v ∈ span(X)` at tolerance `MEMBERSHIP_TOL·√n`, scaled by `‖v‖/√n`.
    pub fn in_span(&self, v: &DVector<f64>) -> bool {
        let n = self.n() as f64;
        let scale = (v.norm() / n.sqrt()).max(f64::MIN_POSITIVE);
        self.residuals(v).norm() <= MEMBERSHIP_TOL * n.sqrt() * scale
    }

    /// Whether `Rβ̂(v) = 0` at tolerance relative to `‖R‖·‖β̂‖` scale.
    pub fn restriction_vanishes(&self, v: &DVector<f64>) -> bool {
        let b = self.beta_hat(v);
        let rb = &self.r_mat * &b;
        let scale = self.r_mat.norm() * b.norm().max(v.norm() / (self.n() as f64).sqrt());
        rb.norm() <= MEMBERSHIP_TOL * scale.max(f64::MIN_POSITIVE)
    }
}

/// A point `μ₀ = Xβ₀` of the null set `𝔐₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullPoint {
    pub mu0: DVector<f64>,
    pub beta0: DVector<f64>,
}

/// Minimum-norm solution `β₀ = R'(RR')⁻¹r` and `μ₀ = Xβ₀`.
pub fn null_point(problem: &RegressionProblem) -> Result<NullPoint> {
    // R'(RR')⁻¹r = Q U'⁻¹r with R' = QU.
    let (q, r_tilde) = problem.orthonormal_hypothesis();
    let beta0 = q.transpose() * r_tilde;
    let mu0 = problem.x() * &beta0;
    Ok(NullPoint { mu0, beta0 })
}

/// `Λ(ρ)` with entries `ρ^{|i−j|}`.
pub fn ar1_matrix(rho: f64, n: usize) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    if n == 0 {
        return Err(Error::Domain("n must be positive".into()));
    }
    let powers: Vec<f64> = (0..n).map(|h| rho.powi(h as i32)).collect();
    Ok(linalg::symmetric_toeplitz(&powers))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("AR(1) coefficient must satisfy |ρ| < 1, got {rho}")));
    }
    Ok(())
}

/// Overwrites `out` with a stationary AR(1) path with unit marginal variance:
/// `u₁ = z₁`, `u_t = ρu_{t−1} + √(1−ρ²) z_t`.
pub fn fill_ar1<R: rand::Rng + ?Sized>(rng: &mut R, rho: f64, out: &mut DVector<f64>) {
    let innov = (1.0 - rho * rho).sqrt();
    let mut prev = 0.0;
    for (t, slot) in out.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        prev = if t == 0 { z } else { rho * prev + innov * z };
        *slot = prev;
    }
}

/// `y = μ + σu` with `u ~ N(0, Λ(ρ))`, deterministic in `seed`.
pub fn sample_gaussian_ar1(
    rho: f64,
    sigma: f64,
    mu: &DVector<f64>,
    seed: u64,
) -> Result<DVector<f64>> {
    check_rho(rho)?;
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("σ must be positive, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = DVector::zeros(mu.len());
    fill_ar1(&mut rng, rho, &mut u);
    Ok(mu + u * sigma)
}

/// Correlation matrix of the MA(d) process with coefficients `α`
/// (`α₀` conventionally 1).
pub fn ma_closure_matrix(alpha: &[f64], n: usize) -> Result<DMatrix<f64>> {
    let denom: f64 = alpha.iter().map(|a| a * a).sum();
    if alpha.is_empty() || denom == 0.0 {
        return Err(Error::Domain("MA coefficients must not all be zero".into()));
    }
    let d = alpha.len() - 1;
    let acf: Vec<f64> = (0..n)
        .map(|h| {
            if h > d {
                0.0
            } else {
                (0..=d - h).map(|j| alpha[j] * alpha[j + h]).sum::<f64>() / denom
            }
        })
        .collect();
    Ok(linalg::symmetric_toeplitz(&acf))
}

/// One covariance matrix `Σ` of a family, labelled for reporting.
#[derive(Debug, Clone)]
pub enum CovarianceMember {
    Ar1 { rho: f64 },
    Matrix { label: String, sigma: Arc<DMatrix<f64>>, factor: Arc<DMatrix<f64>> },
}

impl CovarianceMember {
    pub fn ar1(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(Self::Ar1 { rho })
    }

    /// Wraps an explicit SPD matrix, computing its Cholesky factor.
    pub fn matrix(label: impl Into<String>, sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Domain("Σ must be square".into()));
        }
        if linalg::relative_diff(&sigma, &sigma.transpose()) > 1e-12 {
            return Err(Error::Domain("Σ must be symmetric".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("Σ is not positive definite".into()))?;
        let factor = chol.l();
        Ok(Self::Matrix { label: label.into(), sigma: Arc::new(sigma), factor: Arc::new(factor) })
    }

    pub fn label(&self) -> String {
        match self {
            Self::Ar1 { rho } => format!("ar1({rho})"),
            Self::Matrix { label, .. } => label.clone(),
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match self {
            Self::Ar1 { rho } => Some(*rho),
            Self::Matrix { .. } => None,
        }
    }

    pub fn dense(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            Self::Ar1 { rho } => ar1_matrix(*rho, n),
            Self::Matrix { sigma, .. } => Ok(sigma.as_ref().clone()),
        }
    }

    /// Draws `u ~ N(0, Σ)` into `out`.
    pub fn fill<R: rand::Rng + ?Sized>(&self, rng: &mut R, out: &mut DVector<f64>) {
        match self {
            Self::Ar1 { rho } => fill_ar1(rng, *rho, out),
            Self::Matrix { factor, .. } => {
                let z = DVector::from_fn(out.len(), |_, _| StandardNormal.sample(rng));
                out.copy_from(&(factor.as_ref() * z));
            }
        }
    }
}

/// A finite set of disturbance correlation matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovarianceFamily {
    Ar1Grid { rho: Vec<f64> },
    /// AR(1) matrices with `ρ ∈ (−1+ε, 1)`.
    Ar1Restricted { epsilon: f64, rho: Vec<f64> },
    /// Explicit matrices, e.g. MA(d) correlation matrices.
    ExplicitList {
        #[serde(skip)]
        matrices: Vec<DMatrix<f64>>,
        #[serde(default)]
        ma: Vec<Vec<f64>>,
    },
}

/// Default grid `{0, ±0.3, ±0.6, ±0.9, ±0.95, ±0.99}` plus `±(1−10⁻⁴)`.
pub fn default_rho_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    for r in [0.3, 0.6, 0.9, 0.95, 0.99, 1.0 - 1e-4] {
        g.push(r);
        g.push(-r);
    }
    g
}

impl CovarianceFamily {
    pub fn ar1_grid(rho: Vec<f64>) -> Result<Self> {
        let fam = Self::Ar1Grid { rho };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Ar1Grid { rho } => {
                if rho.is_empty() {
                    return Err(Error::Domain("ρ grid is empty".into()));
                }
                rho.iter().try_for_each(|&r| check_rho(r))
            }
            Self::Ar1Restricted { epsilon, rho } => {
                if !(*epsilon > 0.0 && *epsilon <= 1.0) {
                    return Err(Error::Domain(format!("ε must lie in (0, 1], got {epsilon}")));
                }
                if rho.is_empty() {
                    return Err(Error::Domain("ρ grid is empty".into()));
                }
                for &r in rho {
                    check_rho(r)?;
                    if r <= -1.0 + epsilon {
                        return Err(Error::Domain(format!("ρ = {r} violates ρ > −1+ε with ε = {epsilon}")));
                    }
                }
                Ok(())
            }
            Self::ExplicitList { matrices, ma } => {
                if matrices.is_empty() && ma.is_empty() {
                    return Err(Error::Domain("explicit covariance list is empty".into()));
                }
                Ok(())
            }
        }
    }

    /// Whether the family excludes AR(1) matrices near `ρ = −1`.
    pub fn excludes_e_minus(&self) -> bool {
        matches!(self, Self::Ar1Restricted { .. })
    }

    pub fn members(&self, n: usize) -> Result<Vec<CovarianceMember>> {
        self.validate()?;
        match self {
            Self::Ar1Grid { rho } | Self::Ar1Restricted { rho, .. } => {
                rho.iter().map(|&r| CovarianceMember::ar1(r)).collect()
            }
            Self::ExplicitList { matrices, ma } => {
                let mut out = Vec::with_capacity(matrices.len() + ma.len());
                for (i, m) in matrices.iter().enumerate() {
                    if m.nrows() != n {
                        return Err(Error::Dimension(format!(
                            "covariance matrix {i} is {}×{} but n = {n}",
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    out.push(CovarianceMember::matrix(format!("matrix[{i}]"), m.clone())?);
                }
                for alpha in ma {
                    let label = format!("ma{alpha:?}");
                    out.push(CovarianceMember::matrix(label, ma_closure_matrix(alpha, n)?)?);
                }
                Ok(out)
            }
        }
    }
}
