//! Which size/power breakdown applies to a concrete design and critical
//! value, gradient-existence checks, and the witness designs used to show
//! that the statistic is not identically degenerate.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{BandwidthRule, OmegaSpec, RuleKind};
use crate::config::EstimatorConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{null_point, RegressionProblem};
use crate::prewhiten::{Definiteness, UndefinedReason};
use crate::testing::{span_facts, test_statistic, SpanFacts, TestResult};

/// Ties `|T − C| ≤ TIE_RTOL·max(1, C)` are treated as equality.
pub const TIE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// `T(e+μ₀*) > C` for `e = e₊` or `e₋`: size one.
    SizeOne,
    /// `T(e+μ₀*) < C`: infimal power zero.
    PowerZero,
    /// `T(e+μ₀*) = C` with an existing gradient: size at least 1/2.
    SizeAtLeastHalf,
    /// `e ∈ span(X)` with `Rβ̂(e) ≠ 0` and a non-degenerate statistic: size one.
    SizeOneSpanCase,
    /// `e₊, e₋ ∈ span(X)` with `Rβ̂(e₊) = Rβ̂(e₋) = 0`: size below one is
    /// attainable without adjustment.
    PositiveUnadjusted,
    /// The statistic vanished on every probe.
    TrivialBreakdown,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientStatus {
    Exists,
    Unknown,
}

/// Serializable view of a [`TestResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub t: f64,
    pub defined: bool,
    pub definiteness: Option<Definiteness>,
    pub undefined_reason: Option<UndefinedReason>,
    pub bandwidth: Option<f64>,
}

impl From<&TestResult> for StatSummary {
    fn from(r: &TestResult) -> Self {
        Self {
            t: r.t,
            defined: r.defined,
            definiteness: r.definiteness,
            undefined_reason: r.undefined_reason(),
            bandwidth: r.bandwidth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub span: SpanFacts,
    /// Probes evaluated before a defined, invertible statistic was found
    /// (or the full budget if none was).
    pub probes_used: usize,
    pub nondegenerate: bool,
    /// Breakdown cases whose hypotheses hold: 1 size one, 2 power zero,
    /// 3 size at least ½, 4 size one in the span case.
    pub parts: Vec<u8>,
    pub minus_excluded: bool,
    /// Finite-difference consistency at the tie point, when one was checked.
    pub fd_consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub critical_value: f64,
    pub t_plus: StatSummary,
    pub t_minus: Option<StatSummary>,
    pub grad_exists_plus: Option<GradientStatus>,
    pub grad_exists_minus: Option<GradientStatus>,
    pub verdict: Verdict,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy)]
pub struct DiagnoseOptions {
    /// Ignore `e₋` (covariance families bounded away from `ρ = −1`).
    pub exclude_minus: bool,
    pub probes: usize,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self { exclude_minus: false, probes: 1000, seed: 0 }
    }
}

/// Whether `T` is differentiable at `y`, from the bandwidth and kernel.
pub fn gradient_exists(
    problem: &RegressionProblem,
    y: &DVector<f64>,
    config: &EstimatorConfig,
) -> Result<GradientStatus> {
    let res = test_statistic(problem, y, config)?;
    if !res.defined {
        return Err(Error::Contract("gradient existence needs a defined statistic at y".into()));
    }
    if config.rule.kind() == RuleKind::FixedB {
        return Ok(GradientStatus::Exists);
    }
    let m = res.bandwidth().expect("defined statistic has a bandwidth");
    if m == 0.0 {
        return Ok(if config.kernel.compact_support() {
            GradientStatus::Exists
        } else {
            GradientStatus::Unknown
        });
    }
    let lags = problem.n() - config.p;
    let hits = (0..lags).any(|i| {
        let x = i as f64 / m;
        config.kernel.delta_points().iter().any(|&d| (x - d).abs() <= 1e-12 * d.abs().max(1.0))
    });
    Ok(if hits { GradientStatus::Unknown } else { GradientStatus::Exists })
}

/// Central-difference gradients of `T` at `y` for relative steps
/// `1e−4, 1e−5, 1e−6`.
pub fn finite_difference_gradients(
    problem: &RegressionProblem,
    y: &DVector<f64>,
    config: &EstimatorConfig,
) -> Result<Vec<DVector<f64>>> {
    let scale = y.amax().max(1.0);
    [1e-4, 1e-5, 1e-6]
        .iter()
        .map(|&h| {
            let step = h * scale;
            let mut g = DVector::zeros(y.len());
            for i in 0..y.len() {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += step;
                ym[i] -= step;
                let tp = test_statistic(problem, &yp, config)?.t;
                let tm = test_statistic(problem, &ym, config)?.t;
                g[i] = (tp - tm) / (2.0 * step);
            }
            Ok(g)
        })
        .collect()
}

/// Whether the finite-difference gradients agree across step sizes.
pub fn finite_differences_consistent(grads: &[DVector<f64>]) -> bool {
    let scale = grads.iter().map(|g| g.norm()).fold(0.0, f64::max).max(1e-12);
    grads.windows(2).all(|w| (&w[0] - &w[1]).norm() <= 1e-3 * scale)
}

fn is_tie(t: f64, c: f64) -> bool {
    (t - c).abs() <= TIE_RTOL * c.max(1.0)
}

/// Searches for a `y` with a defined, invertible `Ω̂`; returns the number of
/// probes consumed and whether one was found.
fn probe_nondegenerate(
    problem: &RegressionProblem,
    config: &EstimatorConfig,
    seeds: &[&DVector<f64>],
    probes: usize,
    seed: u64,
) -> Result<(usize, bool)> {
    for (i, y) in seeds.iter().enumerate() {
        if test_statistic(problem, y, config)?.defined {
            return Ok((i + 1, true));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..probes {
        let y = DVector::from_fn(problem.n(), |_, _| StandardNormal.sample(&mut rng));
        if test_statistic(problem, &y, config)?.defined {
            return Ok((seeds.len() + i + 1, true));
        }
    }
    Ok((seeds.len() + probes, false))
}

pub fn diagnose(problem: &RegressionProblem, config: &EstimatorConfig, c: f64) -> Result<DiagnosticsReport> {
    diagnose_with(problem, config, c, DiagnoseOptions::default())
}

pub fn diagnose_with(
    problem: &RegressionProblem,
    config: &EstimatorConfig,
    c: f64,
    opts: DiagnoseOptions,
) -> Result<DiagnosticsReport> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("critical value must lie in (0, ∞), got {c}")));
    }
    config.validate(problem.n(), problem.k())?;
    let n = problem.n();
    let mu0 = null_point(problem)?.mu0;
    let y_plus = linalg::e_plus(n) + &mu0;
    let y_minus = linalg::e_minus(n) + &mu0;
    let t_plus = test_statistic(problem, &y_plus, config)?;
    let t_minus = if opts.exclude_minus { None } else { Some(test_statistic(problem, &y_minus, config)?) };

    let grad = |res: &TestResult, y: &DVector<f64>| -> Result<Option<GradientStatus>> {
        if res.defined {
            gradient_exists(problem, y, config).map(Some)
        } else {
            Ok(None)
        }
    };
    let grad_plus = grad(&t_plus, &y_plus)?;
    let grad_minus = match &t_minus {
        Some(r) => grad(r, &y_minus)?,
        None => None,
    };

    let span = span_facts(problem);
    let mut seeds: Vec<&DVector<f64>> = vec![&y_plus];
    if !opts.exclude_minus {
        seeds.push(&y_minus);
    }
    let (probes_used, nondegenerate) = probe_nondegenerate(problem, config, &seeds, opts.probes, opts.seed)?;

    // Parts 1–3 for each direction e, then part 4.
    let mut parts = Vec::new();
    let mut fd_consistent = None;
    let directions = [(Some(&t_plus), grad_plus, &y_plus), (t_minus.as_ref(), grad_minus, &y_minus)];
    for (res, g, y) in directions {
        let Some(res) = res else { continue };
        if !res.defined {
            continue;
        }
        if is_tie(res.t, c) {
            if g == Some(GradientStatus::Exists) {
                parts.push(3);
                if fd_consistent.is_none() {
                    let grads = finite_difference_gradients(problem, y, config)?;
                    fd_consistent = Some(finite_differences_consistent(&grads));
                }
            }
        } else if res.t > c {
            parts.push(1);
        } else {
            parts.push(2);
        }
    }
    let span_case = (span.plus_in_span && !span.plus_restriction_zero)
        || (!opts.exclude_minus && span.minus_in_span && !span.minus_restriction_zero);
    if nondegenerate && span_case {
        parts.push(4);
    }
    parts.sort_unstable();
    parts.dedup();

    let positive = if opts.exclude_minus {
        span.plus_in_span && span.plus_restriction_zero
    } else {
        span.plus_in_span && span.minus_in_span && span.plus_restriction_zero && span.minus_restriction_zero
    };
    let verdict = if !nondegenerate {
        Verdict::TrivialBreakdown
    } else if positive {
        Verdict::PositiveUnadjusted
    } else if parts.contains(&4) {
        Verdict::SizeOneSpanCase
    } else if parts.contains(&1) {
        Verdict::SizeOne
    } else if parts.contains(&3) {
        Verdict::SizeAtLeastHalf
    } else if parts.contains(&2) {
        Verdict::PowerZero
    } else {
        Verdict::Inconclusive
    };

    Ok(DiagnosticsReport {
        critical_value: c,
        t_plus: (&t_plus).into(),
        t_minus: t_minus.as_ref().map(Into::into),
        grad_exists_plus: grad_plus,
        grad_exists_minus: grad_minus,
        verdict,
        evidence: Evidence {
            span,
            probes_used,
            nondegenerate,
            parts,
            minus_excluded: opts.exclude_minus,
            fd_consistent,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessTarget {
    Plus,
    Minus,
}

/// Householder reflection mapping `v/‖v‖` to `e₁` (and back).
fn reflector(v: &DVector<f64>) -> DMatrix<f64> {
    let k = v.len();
    let mut u = v / v.norm();
    if (u[0] - 1.0).abs() < 1e-15 && u.iter().skip(1).all(|&x| x == 0.0) {
        return DMatrix::identity(k, k);
    }
    u[0] -= 1.0;
    let nu = u.norm();
    u /= nu;
    DMatrix::identity(k, k) - &u * u.transpose() * 2.0
}

/// Design `X` (n × k) whose nonzero rows sit at `jᵢ = 1 + (i−1)(p+1)`,
/// `i = 1, …, k+1`, and span the orthogonal complement of `e` restricted
/// to those rows, paired with `y = e` (`e = e₊` or `e₋`). When the rule
/// carries a weights vector `ω`, the rows `H` satisfy `Hω = (∓1, 1, 0, …)`.
///
/// For such a pair `Â = 0` exactly and `Ω̂(y)` is positive definite.
pub fn witness_design_for(
    target: WitnessTarget,
    n: usize,
    k: usize,
    p: usize,
    rule: &BandwidthRule,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let am = usize::from(rule.kind() == RuleKind::Andrews);
    if k < 1 || p < 1 || k * (p + 1) + p + am > n {
        return Err(Error::Domain(format!(
            "witness design needs k(p+1)+p{} ≤ n; got n = {n}, k = {k}, p = {p}",
            if am == 1 { "+1" } else { "" }
        )));
    }
    let e = match target {
        WitnessTarget::Plus => linalg::e_plus(n),
        WitnessTarget::Minus => linalg::e_minus(n),
    };
    let rows: Vec<usize> = (0..=k).map(|i| i * (p + 1)).collect();
    let e_bar = DVector::from_iterator(k + 1, rows.iter().map(|&j| e[j]));

    // Basis of ē^⊥: bᵢ = eᵢ − (ēᵢ/ē_{k+1}) e_{k+1}.
    let mut basis = DMatrix::zeros(k + 1, k);
    for i in 0..k {
        basis[(i, i)] = 1.0;
        basis[(k, i)] = -e_bar[i] / e_bar[k];
    }
    // Target Hω = a with a ⊥ ē; its coordinates in the basis are a₁..a_k.
    let mut a = DVector::zeros(k + 1);
    let minus_even = target == WitnessTarget::Minus && p.is_multiple_of(2);
    if k == 1 {
        a[0] = -e_bar[1] / e_bar[0];
        a[1] = 1.0;
    } else {
        a[0] = if minus_even { 1.0 } else { -1.0 };
        a[1] = 1.0;
    }
    let coords = a.rows(0, k).into_owned();
    let omega = rule.omega().cloned().unwrap_or_else(OmegaSpec::ones).resolve(k)?;
    // Q with Qω = coords: scaled product of two reflections.
    let q = reflector(&coords) * reflector(&omega) * (coords.norm() / omega.norm());
    let h = basis * q;

    let mut x = DMatrix::zeros(n, k);
    for (i, &j) in rows.iter().enumerate() {
        x.set_row(j, &h.row(i));
    }
    Ok((e, x))
}

/// [`witness_design_for`] with `e = e₊`.
pub fn witness_design(n: usize, k: usize, p: usize, rule: &BandwidthRule) -> Result<(DVector<f64>, DMatrix<f64>)> {
    witness_design_for(WitnessTarget::Plus, n, k, p, rule)
}

/// Location model `X = e₊` with `y = −e₁ + e_{p+2}`: `Â = 0` and
/// `Ẑ = V̂_p = (0, 1, 0, …, 0)`.
pub fn location_fixture(n: usize, p: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if n < 2 * p + 2 {
        return Err(Error::Domain(format!("location fixture needs n ≥ 2p+2, got n = {n}, p = {p}")));
    }
    let mut y = DVector::zeros(n);
    y[0] = -1.0;
    y[p + 1] = 1.0;
    Ok((y, DMatrix::from_element(n, 1, 1.0)))
}
