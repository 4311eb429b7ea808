//! The estimator triple `(κ, M, p)`.

use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthRule;
use crate::error::{Error, Result};
use crate::kernels::Kernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kernel: Kernel,
    pub rule: BandwidthRule,
    /// VAR prewhitening order.
    pub p: usize,
}

impl EstimatorConfig {
    pub fn new(kernel: Kernel, rule: BandwidthRule, p: usize) -> Self {
        Self { kernel, rule, p }
    }

    /// Checks `1 ≤ p ≤ n/(k+1)` and the rule's constants against `k`.
    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        if self.p < 1 || self.p * (k + 1) > n {
            return Err(Error::Config(format!(
                "VAR order must satisfy 1 ≤ p ≤ n/(k+1) = {}/{}; got p = {}",
                n,
                k + 1,
                self.p
            )));
        }
        self.rule.validate(k)
    }
}
