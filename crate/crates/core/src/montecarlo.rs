//! Monte-Carlo rejection probabilities, size over a covariance family, power
//! curves and critical-value calibration.
//!
//! Replication `i` of stream `s` draws from its own generator seeded with a
//! hash of `(seed, s, i)`, so results do not depend on thread scheduling.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{diagnose_with, DiagnoseOptions, Verdict};
use crate::error::{Error, Result};
use crate::model::{null_point, CovarianceFamily, CovarianceMember};
use crate::testing::TestProcedure;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub replications: usize,
    pub seed: u64,
    pub family: CovarianceFamily,
}

impl McConfig {
    pub fn new(replications: usize, seed: u64, family: CovarianceFamily) -> Result<Self> {
        if replications < 100 {
            return Err(Error::Config(format!("need at least 100 replications, got {replications}")));
        }
        family.validate()?;
        Ok(Self { replications, seed, family })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    /// Half-width of the binomial 95% interval, `1.96·√(p̂(1−p̂)/reps)`.
    pub ci: f64,
    pub reps: usize,
}

impl RateEstimate {
    pub fn from_counts(hits: usize, reps: usize) -> Self {
        let rate = hits as f64 / reps as f64;
        Self { rate, ci: 1.96 * (rate * (1.0 - rate) / reps as f64).sqrt(), reps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub label: String,
    pub rho: Option<f64>,
    /// `‖Rβ − r‖/σ`; 0 under the null.
    pub distance: f64,
    pub rate: f64,
    pub ci: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SizePowerCurve {
    pub points: Vec<CurvePoint>,
}

impl SizePowerCurve {
    /// CSV with columns `rho,distance,rate,ci` (`rho` holds the label for
    /// non-AR(1) members).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,distance,rate,ci\n");
        for p in &self.points {
            let rho = p.rho.map(|r| r.to_string()).unwrap_or_else(|| p.label.clone());
            out.push_str(&format!("{rho},{},{},{}\n", p.distance, p.rate, p.ci));
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for replication `index` of stream `stream`.
pub fn replication_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

/// Statistics `T(mean + σu)`, `u ~ N(0, Σ)`, for `reps` replications.
pub fn simulate_statistics(
    procedure: &TestProcedure,
    member: &CovarianceMember,
    mean: &DVector<f64>,
    sigma: f64,
    reps: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    let n = procedure.original().n();
    if mean.len() != n {
        return Err(Error::Dimension(format!("mean has length {} but n = {n}", mean.len())));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("σ must be positive, got {sigma}")));
    }
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(seed, stream, i as u64));
            let mut u = DVector::zeros(n);
            member.fill(&mut rng, &mut u);
            let y = mean + u * sigma;
            procedure.statistic(&y).map(|r| r.t)
        })
        .collect()
}

fn count_at_least(stats: &[f64], c: f64) -> usize {
    stats.iter().filter(|&&t| t >= c).count()
}

/// Fraction of replications with `T ≥ C` at mean `Xβ` and `σ²Σ`.
pub fn rejection_probability(
    procedure: &TestProcedure,
    c: f64,
    member: &CovarianceMember,
    beta: &DVector<f64>,
    sigma: f64,
    reps: usize,
    seed: u64,
) -> Result<RateEstimate> {
    if reps == 0 {
        return Err(Error::Config("need at least one replication".into()));
    }
    let mean = procedure.original().x() * beta;
    let stats = simulate_statistics(procedure, member, &mean, sigma, reps, seed, 0)?;
    Ok(RateEstimate::from_counts(count_at_least(&stats, c), reps))
}

/// Null statistics for every member of the family (`μ = Xβ₀`, `σ = 1`).
/// Member `m` uses stream `m`, so the same draws are reused for every `C`.
pub fn null_statistics(procedure: &TestProcedure, mc: &McConfig) -> Result<Vec<(CovarianceMember, Vec<f64>)>> {
    let problem = procedure.original();
    let mu0 = null_point(problem)?.mu0;
    mc.family
        .members(problem.n())?
        .into_iter()
        .enumerate()
        .map(|(m, member)| {
            let stats = simulate_statistics(procedure, &member, &mu0, 1.0, mc.replications, mc.seed, m as u64)?;
            Ok((member, stats))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub max_rate: f64,
    pub argmax: String,
    pub curve: SizePowerCurve,
}

fn size_from_stats(stats: &[(CovarianceMember, Vec<f64>)], c: f64) -> SizeReport {
    let mut curve = SizePowerCurve::default();
    let mut best = (f64::NEG_INFINITY, String::new());
    for (member, s) in stats {
        let est = RateEstimate::from_counts(count_at_least(s, c), s.len());
        if est.rate > best.0 {
            best = (est.rate, member.label());
        }
        curve.points.push(CurvePoint {
            label: member.label(),
            rho: member.rho(),
            distance: 0.0,
            rate: est.rate,
            ci: est.ci,
        });
    }
    SizeReport { max_rate: best.0, argmax: best.1, curve }
}

/// Largest null rejection rate over the family.
pub fn empirical_size(procedure: &TestProcedure, mc: &McConfig, c: f64) -> Result<SizeReport> {
    Ok(size_from_stats(&null_statistics(procedure, mc)?, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub delta: f64,
    pub critical_value: f64,
    pub size: SizeReport,
    pub iterations: usize,
}

/// Refuses procedures for which a size below one cannot be expected.
fn check_calibratable(procedure: &TestProcedure, family: &CovarianceFamily) -> Result<()> {
    let TestProcedure::Unadjusted { problem, config } = procedure else {
        return Ok(());
    };
    let opts = DiagnoseOptions { exclude_minus: family.excludes_e_minus(), ..Default::default() };
    let report = diagnose_with(problem, config, 1.0, opts)?;
    if report.verdict == Verdict::PositiveUnadjusted {
        Ok(())
    } else {
        Err(Error::NotApplicable(format!(
            "the unadjusted test has verdict {:?}; its size may equal one for every critical value. \
             Use the adjusted test instead",
            report.verdict
        )))
    }
}

fn quantile(sorted: &[f64], level: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * level).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Smallest tested `C` with empirical size at most `δ`, by bisection on
/// common random numbers (so the size is exactly nonincreasing in `C`).
pub fn calibrate_critical_value(procedure: &TestProcedure, mc: &McConfig, delta: f64) -> Result<Calibration> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("δ must be positive, got {delta}")));
    }
    check_calibratable(procedure, &mc.family)?;
    let stats = null_statistics(procedure, mc)?;
    if delta >= 1.0 {
        return Ok(Calibration { delta, critical_value: 0.0, size: size_from_stats(&stats, 0.0), iterations: 0 });
    }
    let size = |c: f64| size_from_stats(&stats, c).max_rate;
    let reference = stats
        .iter()
        .find(|(m, _)| m.rho() == Some(0.0))
        .unwrap_or(&stats[0]);
    let mut sorted = reference.1.clone();
    sorted.sort_by(f64::total_cmp);
    let mut hi = quantile(&sorted, 1.0 - delta / 10.0).max(f64::MIN_POSITIVE);
    let mut iterations = 0;
    while size(hi) > delta {
        hi *= 2.0;
        iterations += 1;
        if iterations > 1100 || !hi.is_finite() {
            return Err(Error::NotApplicable(format!(
                "empirical size stays above δ = {delta} for every finite critical value"
            )));
        }
    }
    let mut lo = 0.0;
    let tol_cal = 0.5 / mc.replications as f64;
    while size(hi) < delta - tol_cal && hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if size(mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(Calibration { delta, critical_value: hi, size: size_from_stats(&stats, hi), iterations })
}

/// `β₁ = β₀ + d·R'(RR')⁻¹v` with `v = (1, …, 1)/√q`, so `‖Rβ₁ − r‖ = d`.
pub fn alternative_beta(procedure: &TestProcedure, distance: f64) -> Result<DVector<f64>> {
    let problem = procedure.original();
    let beta0 = null_point(problem)?.beta0;
    let r = problem.r_matrix();
    let q = problem.q();
    let v = DVector::from_element(q, distance / (q as f64).sqrt());
    let shift = r.transpose()
        * (r * r.transpose())
            .cholesky()
            .ok_or_else(|| Error::InvalidHypothesis("RR' is singular".into()))?
            .solve(&v);
    Ok(beta0 + shift)
}

/// Rejection rates at alternatives `‖Rβ₁ − r‖/σ = d` for each member and
/// each requested distance (`σ = 1`). All distances reuse the same draws.
pub fn power_curve(procedure: &TestProcedure, mc: &McConfig, c: f64, distances: &[f64]) -> Result<SizePowerCurve> {
    let problem = procedure.original();
    let members = mc.family.members(problem.n())?;
    let mut curve = SizePowerCurve::default();
    for (m, member) in members.iter().enumerate() {
        for &d in distances {
            let mean = problem.x() * alternative_beta(procedure, d)?;
            let stats = simulate_statistics(procedure, member, &mean, 1.0, mc.replications, mc.seed, m as u64)?;
            let est = RateEstimate::from_counts(count_at_least(&stats, c), mc.replications);
            curve.points.push(CurvePoint { label: member.label(), rho: member.rho(), distance: d, rate: est.rate, ci: est.ci });
        }
    }
    Ok(curve)
}
