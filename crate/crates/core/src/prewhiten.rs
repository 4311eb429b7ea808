//! VAR(p) prewhitening, kernel smoothing of the prewhitened scores,
//! recoloring, and the covariance estimator `Ω̂`.
//!
//! Data-dependent degeneracy is reported through [`OmegaOutcome::Undefined`]
//! with precedence: rank-deficient VAR regressors, then a singular recoloring
//! filter, then an undefined bandwidth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{BandwidthOutcome, BandwidthUndefined};
use crate::config::EstimatorConfig;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{self, CANCELLATION_RTOL, RESIDUAL_RTOL};
use crate::model::RegressionProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "kebab-case")]
pub enum UndefinedReason {
    /// `V̂₁V̂₁'` is singular (in particular when `y ∈ span(X)`).
    VarRankDeficient,
    /// `I − ΣÂ_l` is singular.
    RecolorSingular,
    BandwidthUndefined(BandwidthUndefined),
}

impl std::fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::VarRankDeficient => f.write_str("VAR regressor matrix is rank deficient"),
            Self::RecolorSingular => f.write_str("recoloring filter I − ΣÂ is singular"),
            Self::BandwidthUndefined(r) => write!(f, "bandwidth undefined ({r:?})"),
        }
    }
}

/// Intermediate quantities of the VAR(p) fit to the scores `V̂ = X'diag(û)`.
#[derive(Debug, Clone)]
pub struct PrewhitenFit {
    pub p: usize,
    /// `k × n`
    pub v: DMatrix<f64>,
    /// `kp × (n−p)`, column `j` stacks `V̂_{j+p−1}, …, V̂_j`.
    pub v1: DMatrix<f64>,
    /// `k × (n−p)`
    pub vp: DMatrix<f64>,
    /// `k × kp`, blocks `Â₁ … Â_p`.
    pub a: DMatrix<f64>,
    /// `k × (n−p)` VAR residuals `Ẑ = V̂_p − ÂV̂₁`.
    pub z: DMatrix<f64>,
    /// `(I − ΣÂ_l)⁻¹`
    pub recolor: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub enum FitOutcome {
    Fitted(Box<PrewhitenFit>),
    Undefined(UndefinedReason),
}

/// A well-defined estimate together with its internals.
#[derive(Debug, Clone)]
pub struct OmegaEstimate {
    /// `q × q`
    pub omega: DMatrix<f64>,
    /// `Ψ̂`, `k × k`
    pub psi: DMatrix<f64>,
    /// Bandwidth `M(y)`.
    pub m: f64,
    /// `B_p = R(X'X)⁻¹(I − ΣÂ_l)⁻¹Ẑ`, `q × (n−p)`.
    pub b: DMatrix<f64>,
    /// `R(X'X)⁻¹(I − ΣÂ_l)⁻¹`, kept as the non-cancelling scale for `B_p`.
    pub lr: DMatrix<f64>,
    pub fit: PrewhitenFit,
}

#[derive(Debug, Clone)]
pub enum OmegaOutcome {
    WellDefined(Box<OmegaEstimate>),
    Undefined(UndefinedReason),
}

impl OmegaOutcome {
    pub fn estimate(&self) -> Option<&OmegaEstimate> {
        match self {
            Self::WellDefined(e) => Some(e),
            Self::Undefined(_) => None,
        }
    }

    pub fn undefined_reason(&self) -> Option<UndefinedReason> {
        match self {
            Self::WellDefined(_) => None,
            Self::Undefined(r) => Some(*r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Definiteness {
    PositiveDefinite,
    SingularNonneg,
    Zero,
}

fn check_p(n: usize, k: usize, p: usize) -> Result<()> {
    if p < 1 || p * (k + 1) > n {
        return Err(Error::Config(format!(
            "VAR order must satisfy 1 ≤ p ≤ n/(k+1) = {n}/{}; got p = {p}",
            k + 1
        )));
    }
    Ok(())
}

/// Builds `V̂₁` and `V̂_p` from `V̂`.
pub fn stack_lags(v: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (k, n) = v.shape();
    let m = n - p;
    let mut v1 = DMatrix::zeros(k * p, m);
    for j in 0..m {
        for l in 1..=p {
            v1.view_mut(((l - 1) * k, j), (k, 1)).copy_from(&v.column(j + p - l));
        }
    }
    let vp = v.columns(p, m).into_owned();
    (v1, vp)
}

/// Fits the VAR(p) to the scores by OLS and forms the recoloring filter.
pub fn fit_var_ols(problem: &RegressionProblem, y: &DVector<f64>, p: usize) -> Result<FitOutcome> {
    let (n, k) = (problem.n(), problem.k());
    if y.len() != n {
        return Err(Error::Dimension(format!("y has length {} but n = {n}", y.len())));
    }
    check_p(n, k, p)?;
    let u = problem.residuals(y);
    if u.norm() <= RESIDUAL_RTOL * y.norm() {
        return Ok(FitOutcome::Undefined(UndefinedReason::VarRankDeficient));
    }
    let mut v = problem.x().transpose();
    for (j, mut col) in v.column_iter_mut().enumerate() {
        col *= u[j];
    }
    let (v1, vp) = stack_lags(&v, p);

    let sv = linalg::singular_values(&v1);
    let smax = sv.max();
    let smin = sv.min();
    if smax == 0.0 || smin <= CANCELLATION_RTOL * smax {
        return Ok(FitOutcome::Undefined(UndefinedReason::VarRankDeficient));
    }
    let gram = &v1 * v1.transpose();
    let Some(chol) = gram.cholesky() else {
        return Ok(FitOutcome::Undefined(UndefinedReason::VarRankDeficient));
    };
    // Â' = (V̂₁V̂₁')⁻¹ V̂₁V̂_p'
    let a = chol.solve(&(&v1 * vp.transpose())).transpose();
    let z = &vp - &a * &v1;

    let mut s = DMatrix::identity(k, k);
    for l in 0..p {
        s -= a.columns(l * k, k);
    }
    let ssv = linalg::singular_values(&s);
    let (smax, smin) = (ssv.max(), ssv.min());
    if smin == 0.0 || smax / smin > 1.0 / f64::EPSILON {
        return Ok(FitOutcome::Undefined(UndefinedReason::RecolorSingular));
    }
    let Some(recolor) = s.try_inverse() else {
        return Ok(FitOutcome::Undefined(UndefinedReason::RecolorSingular));
    };
    Ok(FitOutcome::Fitted(Box::new(PrewhitenFit { p, v, v1, vp, a, z, recolor })))
}

/// `Γ̌ᵢ = (n−p)⁻¹ Σ_{j=i+1}^{n−p} Ẑ_j Ẑ'_{j−i}`, with `Γ̌₋ᵢ = Γ̌ᵢ'`.
pub fn compute_gamma(z: &DMatrix<f64>, lag: i64) -> Result<DMatrix<f64>> {
    let m = z.ncols();
    let i = lag.unsigned_abs() as usize;
    if i >= m {
        return Err(Error::Contract(format!("lag {lag} outside |i| ≤ {}", m as i64 - 1)));
    }
    let lead = z.columns(i, m - i);
    let lagged = z.columns(0, m - i);
    let g = lead * lagged.transpose() / m as f64;
    Ok(if lag < 0 { g.transpose() } else { g })
}

/// `Ψ̌ = Σ_{|i|<n−p} κ(i/M) Γ̌ᵢ`.
pub fn smoothed_gamma(z: &DMatrix<f64>, kernel: &Kernel, bandwidth: f64) -> DMatrix<f64> {
    let m = z.ncols();
    let mut psi = compute_gamma(z, 0).expect("lag 0 is in range");
    for i in 1..m {
        let w = kernel.lag_weight(i as i64, bandwidth);
        if w == 0.0 {
            continue;
        }
        let g = compute_gamma(z, i as i64).expect("lag in range");
        psi += (&g + g.transpose()) * w;
    }
    psi
}

/// Runs prewhitening, smoothing and recoloring, and forms
/// `Ω̂ = nR(X'X)⁻¹Ψ̂(X'X)⁻¹R'`.
pub fn assemble_omega(
    problem: &RegressionProblem,
    y: &DVector<f64>,
    config: &EstimatorConfig,
) -> Result<OmegaOutcome> {
    config.validate(problem.n(), problem.k())?;
    let fit = match fit_var_ols(problem, y, config.p)? {
        FitOutcome::Fitted(f) => *f,
        FitOutcome::Undefined(r) => return Ok(OmegaOutcome::Undefined(r)),
    };
    let n = problem.n();
    let m = match config.rule.evaluate(&fit.z, n, config.p)? {
        BandwidthOutcome::Defined(m) => m,
        BandwidthOutcome::Undefined(r) => {
            return Ok(OmegaOutcome::Undefined(UndefinedReason::BandwidthUndefined(r)))
        }
    };
    let psi_check = smoothed_gamma(&fit.z, &config.kernel, m);
    let psi = linalg::symmetrize(&(&fit.recolor * psi_check * fit.recolor.transpose()));
    let l = problem.r_matrix() * problem.xtx_inv();
    let omega = linalg::symmetrize(&((&l * &psi * l.transpose()) * n as f64));
    let lr = &l * &fit.recolor;
    let b = &lr * &fit.z;
    Ok(OmegaOutcome::WellDefined(Box::new(OmegaEstimate { omega, psi, m, b, lr, fit })))
}

/// `(n/(n−p)) B_p 𝒲_{n−p} B_p'` — an independent route to `Ω̂`.
pub fn toeplitz_representation(est: &OmegaEstimate, kernel: &Kernel, n: usize) -> DMatrix<f64> {
    let m = est.b.ncols();
    let w = kernel.toeplitz_weights(m, est.m);
    &est.b * w * est.b.transpose() * (n as f64 / m as f64)
}

impl OmegaEstimate {
    /// Numerical rank of `Ẑ`, measured against `‖V̂_p‖₂` and capped at
    /// `n−p−kp` (since `Ẑ = V̂_p(I − V̂₁'(V̂₁V̂₁')⁻¹V̂₁)`).
    pub fn z_rank(&self) -> usize {
        let (k, m) = self.fit.z.shape();
        let cap = m.saturating_sub(k * self.fit.p).min(k);
        let scale = linalg::spectral_norm(&self.fit.vp);
        linalg::rank_against_scale(&self.fit.z, scale).min(cap)
    }

    /// Numerical rank of `B_p`, measured against `‖R(X'X)⁻¹S⁻¹‖₂‖V̂_p‖₂`
    /// and capped by `rank(Ẑ)`.
    pub fn b_rank(&self) -> usize {
        if self.b.iter().all(|&x| x == 0.0) {
            return 0;
        }
        let z_rank = self.z_rank();
        if z_rank == 0 {
            return 0;
        }
        let scale = linalg::spectral_norm(&self.lr) * linalg::spectral_norm(&self.fit.vp);
        linalg::rank_against_scale(&self.b, scale).min(z_rank)
    }

    pub fn definiteness(&self) -> Definiteness {
        let q = self.b.nrows();
        match self.b_rank() {
            0 => Definiteness::Zero,
            r if r < q => Definiteness::SingularNonneg,
            _ => Definiteness::PositiveDefinite,
        }
    }
}

pub fn classify_definiteness(outcome: &OmegaOutcome) -> Result<Definiteness> {
    match outcome {
        OmegaOutcome::WellDefined(e) => Ok(e.definiteness()),
        OmegaOutcome::Undefined(r) => {
            Err(Error::Contract(format!("Ω̂ is undefined ({r}); definiteness is meaningless")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::{BandwidthRule, OmegaSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, k: usize, q: usize) -> RegressionProblem {
        let x = random_matrix(rng, n, k);
        let r = random_matrix(rng, q, k);
        let rv = DVector::from_fn(q, |_, _| rng.sample(StandardNormal));
        RegressionProblem::new(x, r, rv).unwrap()
    }

    fn kv() -> EstimatorConfig {
        EstimatorConfig::new(Kernel::Bartlett, BandwidthRule::fixed_b(1.0), 1)
    }

    #[test]
    fn lag_stacking_order() {
        let v = DMatrix::from_fn(1, 5, |_, j| j as f64 + 1.0);
        let (v1, vp) = stack_lags(&v, 2);
        // Column j of V̂₁ holds (V̂_{j+1}, V̂_j) in 1-based terms.
        assert_eq!(v1, DMatrix::from_row_slice(2, 3, &[2.0, 3.0, 4.0, 1.0, 2.0, 3.0]));
        assert_eq!(vp.as_slice(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn exact_fit_is_var_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_problem(&mut rng, 12, 2, 1);
        let y = p.x() * DVector::from_vec(vec![0.3, -1.2]);
        let out = assemble_omega(&p, &y, &kv()).unwrap();
        assert_eq!(out.undefined_reason(), Some(UndefinedReason::VarRankDeficient));
        assert!(classify_definiteness(&out).is_err());
    }

    #[test]
    fn location_construction_gives_unit_residual() {
        // X = e₊, n = 8, p = 1, y = −e₁ + e₃: û = y, V̂ = û', Â = 0,
        // Ẑ = V̂_p = (0, 1, 0, …, 0).
        let n = 8;
        let prob = RegressionProblem::new(
            DMatrix::from_element(n, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
        )
        .unwrap();
        let mut y = DVector::zeros(n);
        y[0] = -1.0;
        y[2] = 1.0;
        let FitOutcome::Fitted(fit) = fit_var_ols(&prob, &y, 1).unwrap() else {
            panic!("expected a fit")
        };
        assert_eq!(fit.a[(0, 0)], 0.0);
        let mut expected = DMatrix::zeros(1, n - 1);
        expected[(0, 1)] = 1.0;
        assert_eq!(fit.z, expected);
        assert_eq!(fit.vp, expected);
    }

    #[test]
    fn gamma_examples() {
        let mut z = DMatrix::zeros(2, 5);
        z[(0, 3)] = 2.0;
        z[(1, 3)] = -1.0;
        let g0 = compute_gamma(&z, 0).unwrap();
        let c = z.column(3).into_owned();
        assert_eq!(g0, &c * c.transpose() / 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_matrix(&mut rng, 3, 9);
        assert_eq!(compute_gamma(&z, -2).unwrap(), compute_gamma(&z, 2).unwrap().transpose());
        let mut brute = DMatrix::zeros(3, 3);
        for j in 1..9 {
            for a in 0..3 {
                for b in 0..3 {
                    brute[(a, b)] += z[(a, j)] * z[(b, j - 1)];
                }
            }
        }
        brute /= 9.0;
        assert!(linalg::relative_diff(&compute_gamma(&z, 1).unwrap(), &brute) < 1e-14);
        assert!(compute_gamma(&z, 9).is_err());
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_problem(&mut rng, 20, 2, 1);
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let FitOutcome::Fitted(fit) = fit_var_ols(&p, &y, 2).unwrap() else { panic!() };
        let cross = &fit.z * fit.v1.transpose();
        assert!(cross.amax() <= 1e-10 * fit.vp.norm() * fit.v1.norm());
        assert!(linalg::relative_diff(&fit.z, &(&fit.vp - &fit.a * &fit.v1)) < 1e-10);
    }

    #[test]
    fn toeplitz_identity_and_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rules = [
            BandwidthRule::fixed_b(0.7),
            BandwidthRule::Andrews { j: 1, omega: OmegaSpec::ones(), c1: 1.1447, c2: 1.0 / 3.0 },
            BandwidthRule::newey_west_default(OmegaSpec::ones()),
        ];
        for trial in 0..30 {
            let prob = random_problem(&mut rng, 25, 2, 2);
            let y = DVector::from_fn(25, |_, _| rng.sample(StandardNormal));
            for kernel in [Kernel::Bartlett, Kernel::Parzen, Kernel::QuadraticSpectral] {
                let cfg = EstimatorConfig::new(kernel.clone(), rules[trial % 3].clone(), 1 + trial % 2);
                let out = assemble_omega(&prob, &y, &cfg).unwrap();
                let est = out.estimate().expect("random data gives a defined estimate");
                let alt = toeplitz_representation(est, &kernel, 25);
                assert!(linalg::relative_diff(&est.omega, &alt) <= 1e-10);
                assert!(linalg::min_eigenvalue(&est.omega) >= -1e-10 * est.omega.trace());
                assert_eq!(est.definiteness(), Definiteness::PositiveDefinite);
            }
        }
    }

    #[test]
    fn equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let prob = random_problem(&mut rng, 20, 2, 1);
        let cfg = EstimatorConfig::new(
            Kernel::QuadraticSpectral,
            BandwidthRule::Andrews { j: 2, omega: OmegaSpec::ones(), c1: 1.13221, c2: 0.2 },
            1,
        );
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let gamma = DVector::from_vec(vec![3.0, -0.5]);
        let alpha = -2.5;
        let y2 = &y * alpha + prob.x() * gamma;
        let a = assemble_omega(&prob, &y, &cfg).unwrap();
        let b = assemble_omega(&prob, &y2, &cfg).unwrap();
        let (a, b) = (a.estimate().unwrap(), b.estimate().unwrap());
        assert!(linalg::relative_diff(&(&a.omega * (alpha * alpha)), &b.omega) < 1e-8);
        assert_relative_eq!(a.m, b.m, max_relative = 1e-8);
    }

    #[test]
    fn dimension_trap_never_positive_definite() {
        // n < k(p+1)+p with q = k: Ẑ vanishes identically.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let prob = random_problem(&mut rng, 6, 2, 2);
            let y = DVector::from_fn(6, |_, _| rng.sample(StandardNormal));
            let cfg = EstimatorConfig::new(Kernel::Bartlett, BandwidthRule::fixed_b(1.0), 2);
            let out = assemble_omega(&prob, &y, &cfg).unwrap();
            if let Ok(d) = classify_definiteness(&out) {
                assert_ne!(d, Definiteness::PositiveDefinite);
            }
        }
    }

    #[test]
    fn definiteness_from_rank_of_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let prob = random_problem(&mut rng, 20, 2, 2);
        let y = DVector::from_fn(20, |_, _| rng.sample(StandardNormal));
        let out = assemble_omega(&prob, &y, &kv()).unwrap();
        let mut est = out.estimate().unwrap().clone();
        let keep = est.b.row(0).into_owned();
        est.b.fill(0.0);
        assert_eq!(est.definiteness(), Definiteness::Zero);
        est.b.set_row(0, &keep);
        assert_eq!(est.definiteness(), Definiteness::SingularNonneg);
    }

    #[test]
    fn p_out_of_range_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let prob = random_problem(&mut rng, 8, 2, 1);
        let y = DVector::from_fn(8, |_, _| rng.sample(StandardNormal));
        let cfg = EstimatorConfig::new(Kernel::Bartlett, BandwidthRule::fixed_b(1.0), 3);
        assert!(matches!(assemble_omega(&prob, &y, &cfg), Err(Error::Config(_))));
    }
}
