//! Bandwidth rules: Andrews-type AR(1) plug-in, Newey–West nonparametric
//! plug-in (real-bandwidth variant), and fixed-b.
//!
//! All rules take the prewhitened residual matrix `Ẑ` (k × (n−p)). Zero
//! denominators are detected exactly, not against a tolerance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights vector `ω` (nonnegative, not identically zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSpec {
    Preset(OmegaPreset),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaPreset {
    /// `(1, …, 1)`
    Ones,
    /// `(0, 1, …, 1)`, i.e. the intercept column is ignored.
    ZeroFirst,
}

impl Default for OmegaSpec {
    fn default() -> Self {
        Self::Preset(OmegaPreset::Ones)
    }
}

impl OmegaSpec {
    pub fn ones() -> Self {
        Self::Preset(OmegaPreset::Ones)
    }

    pub fn zero_first() -> Self {
        Self::Preset(OmegaPreset::ZeroFirst)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "ones" => Ok(Self::ones()),
            "zero-first" => Ok(Self::zero_first()),
            list => list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("invalid ω entry '{t}'")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Self::Explicit),
        }
    }

    pub fn resolve(&self, k: usize) -> Result<DVector<f64>> {
        let v = match self {
            Self::Preset(OmegaPreset::Ones) => DVector::from_element(k, 1.0),
            Self::Preset(OmegaPreset::ZeroFirst) => {
                DVector::from_fn(k, |i, _| if i == 0 { 0.0 } else { 1.0 })
            }
            Self::Explicit(w) => {
                if w.len() != k {
                    return Err(Error::Config(format!("ω has length {} but k = {k}", w.len())));
                }
                DVector::from_column_slice(w)
            }
        };
        if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config("ω must be finite and nonnegative".into()));
        }
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("ω must not be identically zero".into()));
        }
        Ok(v)
    }
}

/// Lag weights `w(i)` for the Newey–West rule, `w(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LagWeights {
    Preset(LagPreset),
    /// `w(0), w(1), …`; lags beyond the list get weight 0.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagPreset {
    /// `w(i) = 1` for `|i| ≤ ⌊4(n/100)^{2/9}⌋`, else 0.
    Rectangular,
}

impl Default for LagWeights {
    fn default() -> Self {
        Self::Preset(LagPreset::Rectangular)
    }
}

pub fn rectangular_cutoff(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

impl LagWeights {
    fn validate(&self) -> Result<()> {
        if let Self::Explicit(w) = self {
            if w.first() != Some(&1.0) {
                return Err(Error::Config("lag weights must start with w(0) = 1".into()));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::Config("lag weights must be finite and nonnegative".into()));
            }
        }
        Ok(())
    }

    /// `w(|i|)` for a sample of size `n`.
    pub fn weight(&self, lag: usize, n: usize) -> f64 {
        match self {
            Self::Preset(LagPreset::Rectangular) => {
                if lag <= rectangular_cutoff(n) {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Explicit(w) => w.get(lag).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedBandwidth {
    /// `M = b(n−p)` with `b ∈ (0, 1]`.
    Fraction(f64),
    /// A constant `M > 0`.
    Lag(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BandwidthRule {
    Andrews {
        j: u8,
        #[serde(default)]
        omega: OmegaSpec,
        c1: f64,
        c2: f64,
    },
    NeweyWest {
        #[serde(default)]
        omega: OmegaSpec,
        #[serde(default)]
        weights: LagWeights,
        cbar1: u32,
        cbar2: f64,
        cbar3: f64,
    },
    FixedB {
        #[serde(flatten)]
        value: FixedBandwidth,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthUndefined {
    /// Some `Σ_{j<n−p} Ẑ_{ij}² = 0`.
    RhoUndefined,
    /// Some `ρ̂ᵢ² = 1`.
    RhoUnit,
    /// `Σ ωᵢσ̂ᵢ⁴/(1−ρ̂ᵢ)⁴ = 0`.
    SigmaAllZero,
    /// `Σ w(i)σ̄ᵢ = 0`.
    DenominatorZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "kebab-case")]
pub enum BandwidthOutcome {
    Defined(f64),
    Undefined(BandwidthUndefined),
}

impl BandwidthOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Defined(m) => Some(*m),
            Self::Undefined(_) => None,
        }
    }
}

impl BandwidthRule {
    /// Andrews rule with the constants customary for `kernel`
    /// (Bartlett: `(1.1447, 1/3, j=1)`, QS: `(1.13221, 1/5, j=2)`).
    pub fn andrews_default(kernel: &crate::Kernel, omega: OmegaSpec) -> Result<Self> {
        match kernel {
            crate::Kernel::Bartlett => Ok(Self::Andrews { j: 1, omega, c1: 1.1447, c2: 1.0 / 3.0 }),
            crate::Kernel::QuadraticSpectral => {
                Ok(Self::Andrews { j: 2, omega, c1: 1.13221, c2: 1.0 / 5.0 })
            }
            other => Err(Error::Config(format!(
                "no default Andrews constants for kernel '{}'; pass c1, c2 and j",
                other.name()
            ))),
        }
    }

    /// Newey–West rule with rectangular lag weights and `c̄ = (1, 1.1447, 1/3)`.
    pub fn newey_west_default(omega: OmegaSpec) -> Self {
        Self::NeweyWest {
            omega,
            weights: LagWeights::default(),
            cbar1: 1,
            cbar2: 1.1447,
            cbar3: 1.0 / 3.0,
        }
    }

    pub fn fixed_b(b: f64) -> Self {
        Self::FixedB { value: FixedBandwidth::Fraction(b) }
    }

    pub fn kind(&self) -> RuleKind {
        match self {
            Self::Andrews { .. } => RuleKind::Andrews,
            Self::NeweyWest { .. } => RuleKind::NeweyWest,
            Self::FixedB { .. } => RuleKind::FixedB,
        }
    }

    pub fn omega(&self) -> Option<&OmegaSpec> {
        match self {
            Self::Andrews { omega, .. } | Self::NeweyWest { omega, .. } => Some(omega),
            Self::FixedB { .. } => None,
        }
    }

    /// Checks constants, and `ω` against `k` when the rule carries one.
    pub fn validate(&self, k: usize) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            Self::Andrews { j, omega, c1, c2 } => {
                if !matches!(j, 1 | 2) {
                    return Err(Error::Config(format!("Andrews j must be 1 or 2, got {j}")));
                }
                pos("c1", *c1)?;
                pos("c2", *c2)?;
                omega.resolve(k).map(|_| ())
            }
            Self::NeweyWest { omega, weights, cbar1, cbar2, cbar3 } => {
                if *cbar1 < 1 {
                    return Err(Error::Config("c̄1 must be a positive integer".into()));
                }
                pos("c̄2", *cbar2)?;
                pos("c̄3", *cbar3)?;
                weights.validate()?;
                omega.resolve(k).map(|_| ())
            }
            Self::FixedB { value: FixedBandwidth::Fraction(b) } => {
                if *b > 0.0 && *b <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("b must lie in (0, 1], got {b}")))
                }
            }
            Self::FixedB { value: FixedBandwidth::Lag(m) } => pos("M", *m),
        }
    }

    /// The rule with `ω` resolved at `k` and padded with `extra` zeros.
    pub fn padded(&self, k: usize, extra: usize) -> Result<Self> {
        let pad = |omega: &OmegaSpec| -> Result<OmegaSpec> {
            let mut w: Vec<f64> = omega.resolve(k)?.iter().copied().collect();
            w.extend(std::iter::repeat_n(0.0, extra));
            Ok(OmegaSpec::Explicit(w))
        };
        Ok(match self {
            Self::Andrews { j, omega, c1, c2 } => {
                Self::Andrews { j: *j, omega: pad(omega)?, c1: *c1, c2: *c2 }
            }
            Self::NeweyWest { omega, weights, cbar1, cbar2, cbar3 } => Self::NeweyWest {
                omega: pad(omega)?,
                weights: weights.clone(),
                cbar1: *cbar1,
                cbar2: *cbar2,
                cbar3: *cbar3,
            },
            Self::FixedB { .. } => self.clone(),
        })
    }

    /// Evaluates the rule on `Ẑ` for sample size `n` and VAR order `p`.
    pub fn evaluate(&self, z: &DMatrix<f64>, n: usize, p: usize) -> Result<BandwidthOutcome> {
        match self {
            Self::Andrews { .. } => bandwidth_am(z, self, n),
            Self::NeweyWest { .. } => bandwidth_nw(z, self, n),
            Self::FixedB { .. } => bandwidth_kv(self, n, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Andrews,
    NeweyWest,
    FixedB,
}

impl std::str::FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "andrews" | "am" => Ok(Self::Andrews),
            "newey-west" | "nw" => Ok(Self::NeweyWest),
            "fixed-b" | "kv" => Ok(Self::FixedB),
            other => Err(Error::Config(format!(
                "unknown bandwidth rule '{other}' (expected andrews, newey-west or fixed-b)"
            ))),
        }
    }
}

fn check_z(z: &DMatrix<f64>, omega: &DVector<f64>) -> Result<()> {
    if z.ncols() < 2 {
        return Err(Error::Contract(format!("Ẑ needs at least 2 columns, got {}", z.ncols())));
    }
    if omega.len() != z.nrows() {
        return Err(Error::Contract(format!(
            "ω has length {} but Ẑ has {} rows",
            omega.len(),
            z.nrows()
        )));
    }
    Ok(())
}

/// Per-row OLS AR(1) fits `(ρ̂ᵢ, σ̂ᵢ²)`; `None` where the denominator is zero.
pub fn ar1_fits(z: &DMatrix<f64>) -> Vec<Option<(f64, f64)>> {
    let m = z.ncols();
    (0..z.nrows())
        .map(|i| {
            let row = z.row(i);
            let den: f64 = (0..m - 1).map(|j| row[j] * row[j]).sum();
            if den == 0.0 {
                return None;
            }
            let num: f64 = (1..m).map(|j| row[j] * row[j - 1]).sum();
            let rho = num / den;
            let ss: f64 = (1..m).map(|j| (row[j] - rho * row[j - 1]).powi(2)).sum();
            Some((rho, ss / (m - 1) as f64))
        })
        .collect()
}

pub fn bandwidth_am(z: &DMatrix<f64>, rule: &BandwidthRule, n: usize) -> Result<BandwidthOutcome> {
    let BandwidthRule::Andrews { j, omega, c1, c2 } = rule else {
        return Err(Error::Contract("bandwidth_am needs an Andrews rule".into()));
    };
    let omega = omega.resolve(z.nrows())?;
    check_z(z, &omega)?;
    let fits = ar1_fits(z);
    let mut params = Vec::with_capacity(fits.len());
    for f in &fits {
        match f {
            None => return Ok(BandwidthOutcome::Undefined(BandwidthUndefined::RhoUndefined)),
            Some(pair) => params.push(*pair),
        }
    }
    if params.iter().any(|(rho, _)| rho * rho == 1.0) {
        return Ok(BandwidthOutcome::Undefined(BandwidthUndefined::RhoUnit));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (w, (rho, s2)) in omega.iter().zip(&params) {
        let s4 = s2 * s2;
        let one_m = 1.0 - rho;
        den += w * s4 / one_m.powi(4);
        num += w * match j {
            1 => 4.0 * rho * rho * s4 / (one_m.powi(6) * (1.0 + rho).powi(2)),
            _ => 4.0 * rho * rho * s4 / one_m.powi(8),
        };
    }
    if den == 0.0 {
        return Ok(BandwidthOutcome::Undefined(BandwidthUndefined::SigmaAllZero));
    }
    let alpha = num / den;
    Ok(BandwidthOutcome::Defined(c1 * (alpha * n as f64).powf(*c2)))
}

/// `σ̄ᵢ = ω'Γ̌ᵢω` for `i = 0, …, n−p−1`.
pub fn nw_autocovariances(z: &DMatrix<f64>, omega: &DVector<f64>) -> Vec<f64> {
    let m = z.ncols();
    let proj: Vec<f64> = (0..m).map(|j| z.column(j).dot(omega)).collect();
    (0..m)
        .map(|i| (i..m).map(|j| proj[j] * proj[j - i]).sum::<f64>() / m as f64)
        .collect()
}

pub fn bandwidth_nw(z: &DMatrix<f64>, rule: &BandwidthRule, n: usize) -> Result<BandwidthOutcome> {
    let BandwidthRule::NeweyWest { omega, weights, cbar1, cbar2, cbar3 } = rule else {
        return Err(Error::Contract("bandwidth_nw needs a Newey–West rule".into()));
    };
    let omega = omega.resolve(z.nrows())?;
    check_z(z, &omega)?;
    let sig = nw_autocovariances(z, &omega);
    let mut num = 0.0;
    let mut den = sig[0];
    for (i, s) in sig.iter().enumerate().skip(1) {
        let ws = weights.weight(i, n) * s;
        den += 2.0 * ws;
        num += 2.0 * (i as f64).powi(*cbar1 as i32) * ws;
    }
    if den == 0.0 {
        return Ok(BandwidthOutcome::Undefined(BandwidthUndefined::DenominatorZero));
    }
    let ratio = num / den;
    Ok(BandwidthOutcome::Defined(cbar2 * (ratio * ratio * n as f64).powf(*cbar3)))
}

pub fn bandwidth_kv(rule: &BandwidthRule, n: usize, p: usize) -> Result<BandwidthOutcome> {
    let BandwidthRule::FixedB { value } = rule else {
        return Err(Error::Contract("bandwidth_kv needs a fixed-b rule".into()));
    };
    if p < 1 || p >= n {
        return Err(Error::Contract(format!("need 1 ≤ p < n, got p = {p}, n = {n}")));
    }
    Ok(BandwidthOutcome::Defined(match value {
        FixedBandwidth::Fraction(b) => b * (n - p) as f64,
        FixedBandwidth::Lag(m) => *m,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn am(j: u8) -> BandwidthRule {
        BandwidthRule::Andrews { j, omega: OmegaSpec::ones(), c1: 1.1447, c2: 1.0 / 3.0 }
    }

    #[test]
    fn am_hand_example() {
        let z = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 1.0, 0.0]);
        let fits = ar1_fits(&z);
        let (rho, s2) = fits[0].unwrap();
        assert_eq!(rho, 0.0);
        // σ̂² sums j = 2..n−p only: (0² + 1² + 0²)/3.
        assert_relative_eq!(s2, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(bandwidth_am(&z, &am(1), 5).unwrap(), BandwidthOutcome::Defined(0.0));
    }

    #[test]
    fn am_undefined_cases() {
        let z = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 5.0]);
        assert_eq!(
            bandwidth_am(&z, &am(1), 5).unwrap(),
            BandwidthOutcome::Undefined(BandwidthUndefined::RhoUndefined)
        );
        // Row (0, 1, 1): ρ̂ = (0·1 + 1·1)/(0² + 1²) = 1.
        let z = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]);
        assert_eq!(
            bandwidth_am(&z, &am(2), 4).unwrap(),
            BandwidthOutcome::Undefined(BandwidthUndefined::RhoUnit)
        );
        // Row (1, 2, 4): ρ̂ = (2 + 8)/5 = 2, residuals (2−2, 4−4) = 0.
        let z = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 4.0]);
        assert_eq!(
            bandwidth_am(&z, &am(1), 4).unwrap(),
            BandwidthOutcome::Undefined(BandwidthUndefined::SigmaAllZero)
        );
    }

    #[test]
    fn nw_examples() {
        let rule = BandwidthRule::newey_west_default(OmegaSpec::ones());
        let z = DMatrix::zeros(2, 5);
        assert_eq!(
            bandwidth_nw(&z, &rule, 6).unwrap(),
            BandwidthOutcome::Undefined(BandwidthUndefined::DenominatorZero)
        );
        assert_eq!(rectangular_cutoff(100), 4);
        assert_eq!(rectangular_cutoff(25), 2);
        let mut z = DMatrix::zeros(2, 5);
        z[(0, 2)] = 1.5;
        z[(1, 2)] = -0.5;
        let sig = nw_autocovariances(&z, &DVector::from_element(2, 1.0));
        assert_relative_eq!(sig[0], 1.0 / 5.0, epsilon = 1e-15);
        assert!(sig[1..].iter().all(|&s| s == 0.0));
        assert_eq!(bandwidth_nw(&z, &rule, 6).unwrap(), BandwidthOutcome::Defined(0.0));
    }

    #[test]
    fn kv_examples() {
        assert_eq!(bandwidth_kv(&BandwidthRule::fixed_b(1.0), 20, 1).unwrap(), BandwidthOutcome::Defined(19.0));
        assert_eq!(bandwidth_kv(&BandwidthRule::fixed_b(0.5), 41, 1).unwrap(), BandwidthOutcome::Defined(20.0));
        let explicit = BandwidthRule::FixedB { value: FixedBandwidth::Lag(7.0) };
        assert_eq!(bandwidth_kv(&explicit, 100, 3).unwrap(), BandwidthOutcome::Defined(7.0));
    }

    #[test]
    fn validation() {
        assert!(BandwidthRule::fixed_b(1.5).validate(2).is_err());
        let zero = BandwidthRule::Andrews { j: 1, omega: OmegaSpec::Explicit(vec![0.0, 0.0]), c1: 1.0, c2: 1.0 };
        assert!(zero.validate(2).is_err());
        let bad_j = BandwidthRule::Andrews { j: 3, omega: OmegaSpec::ones(), c1: 1.0, c2: 1.0 };
        assert!(bad_j.validate(2).is_err());
        let nw0 = BandwidthRule::NeweyWest {
            omega: OmegaSpec::ones(),
            weights: LagWeights::default(),
            cbar1: 0,
            cbar2: 1.0,
            cbar3: 1.0,
        };
        assert!(nw0.validate(2).is_err());
        assert!(BandwidthRule::andrews_default(&crate::Kernel::Parzen, OmegaSpec::ones()).is_err());
    }

    #[test]
    fn padding() {
        let rule = BandwidthRule::newey_west_default(OmegaSpec::ones());
        let padded = rule.padded(2, 2).unwrap();
        assert_eq!(padded.omega(), Some(&OmegaSpec::Explicit(vec![1.0, 1.0, 0.0, 0.0])));
        let kv = BandwidthRule::fixed_b(1.0);
        assert_eq!(kv.padded(2, 2).unwrap(), kv);
    }

    #[test]
    fn omega_parse_and_presets() {
        assert_eq!(OmegaSpec::parse("ones").unwrap(), OmegaSpec::ones());
        assert_eq!(OmegaSpec::zero_first().resolve(3).unwrap().as_slice(), &[0.0, 1.0, 1.0]);
        assert_eq!(OmegaSpec::parse("1, 0.5").unwrap(), OmegaSpec::Explicit(vec![1.0, 0.5]));
        assert!(OmegaSpec::parse("1, x").is_err());
    }

    #[test]
    fn rule_serde_round_trip() {
        for rule in [
            am(2),
            BandwidthRule::newey_west_default(OmegaSpec::zero_first()),
            BandwidthRule::fixed_b(0.5),
            BandwidthRule::FixedB { value: FixedBandwidth::Lag(3.0) },
        ] {
            let s = serde_json::to_string(&rule).unwrap();
            let back: BandwidthRule = serde_json::from_str(&s).unwrap();
            assert_eq!(back, rule, "{s}");
        }
    }

    proptest! {
        #[test]
        fn scale_invariance(vals in prop::collection::vec(-3.0f64..3.0, 12), alpha in prop::sample::select(vec![-2.0, 0.5, 4.0, 1024.0])) {
            let z = DMatrix::from_row_slice(2, 6, &vals);
            let za = &z * alpha;
            for rule in [am(1), am(2), BandwidthRule::newey_west_default(OmegaSpec::ones())] {
                let a = rule.evaluate(&z, 7, 1).unwrap();
                let b = rule.evaluate(&za, 7, 1).unwrap();
                // Powers of two scale every intermediate exactly.
                prop_assert_eq!(a, b);
                if let BandwidthOutcome::Defined(m) = a {
                    prop_assert!(m >= 0.0);
                }
            }
        }
    }
}
