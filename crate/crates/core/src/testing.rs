//! The test statistic `T`, and the artificial-regressor adjustment that
//! augments the design with `e₊` and/or `e₋`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::EstimatorConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, MEMBERSHIP_TOL};
use crate::model::RegressionProblem;
use crate::prewhiten::{assemble_omega, Definiteness, OmegaOutcome, UndefinedReason};

#[derive(Debug, Clone)]
pub struct TestResult {
    /// `T(y)`; 0 whenever `Ω̂` is undefined or singular.
    pub t: f64,
    pub defined: bool,
    pub definiteness: Option<Definiteness>,
    pub internals: OmegaOutcome,
}

impl TestResult {
    /// Rejection uses the closed region `T ≥ C`.
    pub fn reject(&self, c: f64) -> bool {
        self.t >= c
    }

    pub fn undefined_reason(&self) -> Option<UndefinedReason> {
        self.internals.undefined_reason()
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.internals.estimate().map(|e| e.m)
    }
}

/// `T(y) = (Rβ̂ − r)'Ω̂⁻¹(Rβ̂ − r)` if `Ω̂` is well defined and invertible,
/// 0 otherwise.
///
/// `T` depends on `(R, r)` only through the null set, so it is evaluated in
/// the orthonormal form `Q'β = r̃`; `internals` still reports `Ω̂` for `R`.
pub fn test_statistic(
    problem: &RegressionProblem,
    y: &DVector<f64>,
    config: &EstimatorConfig,
) -> Result<TestResult> {
    let internals = assemble_omega(problem, y, config)?;
    let Some(est) = internals.estimate() else {
        return Ok(TestResult { t: 0.0, defined: false, definiteness: None, internals });
    };
    let definiteness = est.definiteness();
    if definiteness != Definiteness::PositiveDefinite {
        return Ok(TestResult { t: 0.0, defined: false, definiteness: Some(definiteness), internals });
    }
    let (q, r_tilde) = problem.orthonormal_hypothesis();
    let d = q * problem.beta_hat(y) - r_tilde;
    let l = q * problem.xtx_inv();
    let omega = linalg::symmetrize(&((&l * &est.psi * l.transpose()) * problem.n() as f64));
    let t = match omega.cholesky() {
        Some(chol) => {
            let s = chol.solve(&d);
            Some(d.dot(&s).max(0.0))
        }
        None => None,
    };
    Ok(match t {
        Some(t) => TestResult { t, defined: true, definiteness: Some(definiteness), internals },
        // Rank test passed but the factorization did not: treat as singular.
        None => TestResult {
            t: 0.0,
            defined: false,
            definiteness: Some(Definiteness::SingularNonneg),
            internals,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// `e₊ ∈ span(X)`, `Rβ̂(e₊) = 0`, `e₋ ∉ span(X)`: append `e₋`.
    One,
    /// `e₋ ∈ span(X)`, `Rβ̂(e₋) = 0`, `e₊ ∉ span(X)`: append `e₊`.
    Two,
    /// Neither in `span(X)`, `rank(X, e₊, e₋) = k+2`: append both.
    Three,
    /// Neither in `span(X)`, `rank(X, e₊, e₋) = k+1`: append `e₊`.
    Four,
}

impl Scenario {
    pub fn number(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::Three => 3,
            Self::Four => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NotApplicable {
    /// `e₊, e₋ ∈ span(X)` with `Rβ̂(e₊) = Rβ̂(e₋) = 0`: the unadjusted test
    /// already has size below one for suitable `C`.
    PositiveUnadjusted,
    /// Some `e ∈ {e₊, e₋} ∩ span(X)` has `Rβ̂(e) ≠ 0`; augmentation cannot help.
    HypothesisInvolvesIntercept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioSelection {
    Applicable(Scenario),
    NotApplicable(NotApplicable),
}

/// Membership facts about `e₊`, `e₋` relative to the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanFacts {
    pub plus_in_span: bool,
    pub minus_in_span: bool,
    pub plus_restriction_zero: bool,
    pub minus_restriction_zero: bool,
}

pub fn span_facts(problem: &RegressionProblem) -> SpanFacts {
    let n = problem.n();
    let (ep, em) = (linalg::e_plus(n), linalg::e_minus(n));
    let plus_in_span = problem.in_span(&ep);
    let minus_in_span = problem.in_span(&em);
    SpanFacts {
        plus_in_span,
        minus_in_span,
        plus_restriction_zero: plus_in_span && problem.restriction_vanishes(&ep),
        minus_restriction_zero: minus_in_span && problem.restriction_vanishes(&em),
    }
}

fn in_span_of(a: &DMatrix<f64>, v: &DVector<f64>) -> bool {
    let n = a.nrows() as f64;
    let qr = a.clone().qr();
    let q = qr.q();
    let resid = v - &q * (q.transpose() * v);
    resid.norm() <= MEMBERSHIP_TOL * n.sqrt() * (v.norm() / n.sqrt())
}

fn new_columns(problem: &RegressionProblem, scenario: Scenario) -> Vec<DVector<f64>> {
    let n = problem.n();
    match scenario {
        Scenario::One => vec![linalg::e_minus(n)],
        Scenario::Two | Scenario::Four => vec![linalg::e_plus(n)],
        Scenario::Three => vec![linalg::e_plus(n), linalg::e_minus(n)],
    }
}

pub fn select_scenario(problem: &RegressionProblem) -> Result<ScenarioSelection> {
    let f = span_facts(problem);
    if (f.plus_in_span && !f.plus_restriction_zero) || (f.minus_in_span && !f.minus_restriction_zero) {
        return Ok(ScenarioSelection::NotApplicable(NotApplicable::HypothesisInvolvesIntercept));
    }
    let scenario = match (f.plus_in_span, f.minus_in_span) {
        (true, true) => return Ok(ScenarioSelection::NotApplicable(NotApplicable::PositiveUnadjusted)),
        (true, false) => Scenario::One,
        (false, true) => Scenario::Two,
        (false, false) => {
            let n = problem.n();
            let xe = linalg::hstack(&[problem.x(), &DMatrix::from_column_slice(n, 1, linalg::e_plus(n).as_slice())]);
            if in_span_of(&xe, &linalg::e_minus(n)) {
                Scenario::Four
            } else {
                Scenario::Three
            }
        }
    };
    let k_bar = problem.k() + new_columns(problem, scenario).len();
    if k_bar >= problem.n() {
        return Err(Error::AugmentationImpossible { k_bar, n: problem.n() });
    }
    Ok(ScenarioSelection::Applicable(scenario))
}

/// The augmented problem `(X̄, R̄ = (R, 0), r)` and the matching estimator
/// configuration (with `ω̄ = (ω, 0…)`).
#[derive(Debug, Clone)]
pub struct AdjustedProblem {
    pub scenario: Scenario,
    pub problem: RegressionProblem,
    pub config: EstimatorConfig,
    pub original: RegressionProblem,
}

impl AdjustedProblem {
    pub fn k_bar(&self) -> usize {
        self.problem.k()
    }
}

pub fn build_adjusted(problem: &RegressionProblem, config: &EstimatorConfig) -> Result<AdjustedProblem> {
    let scenario = match select_scenario(problem)? {
        ScenarioSelection::Applicable(s) => s,
        ScenarioSelection::NotApplicable(why) => {
            return Err(Error::NotApplicable(format!("artificial-regressor adjustment does not apply: {why:?}")))
        }
    };
    let (n, k) = (problem.n(), problem.k());
    if config.p < 1 || config.p * (k + 3) > n {
        return Err(Error::Config(format!(
            "the adjusted test needs 1 ≤ p ≤ n/(k+3) = {n}/{}; got p = {}",
            k + 3,
            config.p
        )));
    }
    config.validate(n, k)?;
    let cols = new_columns(problem, scenario);
    let extra = cols.len();
    let mut x_bar = problem.x().clone().resize_horizontally(k + extra, 0.0);
    for (i, c) in cols.iter().enumerate() {
        x_bar.set_column(k + i, c);
    }
    let r_bar = problem.r_matrix().clone().resize_horizontally(k + extra, 0.0);
    let adjusted = RegressionProblem::new(x_bar, r_bar, problem.r_vector().clone())?;
    let config_bar = EstimatorConfig {
        kernel: config.kernel.clone(),
        rule: config.rule.padded(k, extra)?,
        p: config.p,
    };
    Ok(AdjustedProblem { scenario, problem: adjusted, config: config_bar, original: problem.clone() })
}

/// `T̄(y)`: [`test_statistic`] on `(X̄, R̄, r)` with the padded configuration.
pub fn adjusted_statistic(adjusted: &AdjustedProblem, y: &DVector<f64>) -> Result<TestResult> {
    test_statistic(&adjusted.problem, y, &adjusted.config)
}

/// A test procedure to simulate: the plain statistic or the adjusted one.
#[derive(Debug, Clone)]
pub enum TestProcedure {
    Unadjusted { problem: RegressionProblem, config: EstimatorConfig },
    Adjusted(AdjustedProblem),
}

impl TestProcedure {
    /// The problem on whose design the data are generated.
    pub fn original(&self) -> &RegressionProblem {
        match self {
            Self::Unadjusted { problem, .. } => problem,
            Self::Adjusted(a) => &a.original,
        }
    }

    pub fn statistic(&self, y: &DVector<f64>) -> Result<TestResult> {
        match self {
            Self::Unadjusted { problem, config } => test_statistic(problem, y, config),
            Self::Adjusted(a) => adjusted_statistic(a, y),
        }
    }
}
