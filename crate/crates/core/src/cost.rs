//! Evaluation-cost estimation for multi-sample scoring budgets.
//!
//! `cost(n) = miss * in_tok + hit * in_tok * (n - 1) + out * out_tok * n`:
//! the first generation pays the cache-miss input price, the remaining n-1
//! reuse the cached prompt, and every sample pays for its output tokens.
//! Costs are abstract units, not currency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_miss() -> f64 {
    1.25
}
fn default_hit() -> f64 {
    0.125
}
fn default_output_cost() -> f64 {
    10.0
}
fn default_input_tokens() -> f64 {
    4.0
}
fn default_output_tokens() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    #[serde(default = "default_miss")]
    pub input_cost_cache_not_hit: f64,
    #[serde(default = "default_hit")]
    pub input_cost_cache_hit: f64,
    #[serde(default = "default_output_cost")]
    pub output_cost: f64,
    #[serde(default = "default_input_tokens")]
    pub input_tokens: f64,
    #[serde(default = "default_output_tokens")]
    pub output_tokens: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            input_cost_cache_not_hit: default_miss(),
            input_cost_cache_hit: default_hit(),
            output_cost: default_output_cost(),
            input_tokens: default_input_tokens(),
            output_tokens: default_output_tokens(),
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("input_cost_cache_not_hit", self.input_cost_cache_not_hit),
            ("input_cost_cache_hit", self.input_cost_cache_hit),
            ("output_cost", self.output_cost),
            ("input_tokens", self.input_tokens),
            ("output_tokens", self.output_tokens),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Domain(format!(
                    "cost parameter {name} must be a non-negative number, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Coefficients of the equivalent affine form `cost(n) = A + B * n`.
    pub fn affine_coefficients(&self) -> (f64, f64) {
        let a = self.input_tokens * (self.input_cost_cache_not_hit - self.input_cost_cache_hit);
        let b = self.input_cost_cache_hit * self.input_tokens
            + self.output_cost * self.output_tokens;
        (a, b)
    }
}

/// Estimated cost of generating n samples per problem.
pub fn estimate_cost(params: &CostParams, n: u64) -> Result<f64> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Domain("sample budget n must be at least 1".into()));
    }
    let nf = n as f64;
    Ok(params.input_cost_cache_not_hit * params.input_tokens
        + params.input_cost_cache_hit * params.input_tokens * (nf - 1.0)
        + params.output_cost * params.output_tokens * nf)
}

pub fn cost_curve(params: &CostParams, n_values: &[u64]) -> Result<Vec<(u64, f64)>> {
    if n_values.is_empty() {
        return Err(Error::Domain("cost curve needs at least one n value".into()));
    }
    n_values
        .iter()
        .map(|&n| estimate_cost(params, n).map(|c| (n, c)))
        .collect()
}
