//! Conditional distribution estimation from the fitted values of a mean
//! model.
//!
//! The estimator treats training pairs `(fitted value, response)` as the
//! sample of a one-dimensional smoothing problem: a query point with fitted
//! value `q` receives weights
//! `w_i = K((fitted_i - q) / h) / sum_j K((fitted_j - q) / h)`
//! over the training responses, and any conditional summary expressible as a
//! weighted average — the CDF in particular — follows directly. Quantiles are
//! obtained by inverting the weighted CDF on the grid of distinct response
//! values, which keeps quantile curves non-decreasing in the probability
//! level by construction.

use crate::error::{Error, Result};
use crate::kernels::{kernel_eval_unchecked, BandwidthRule, KernelSpec};

/// Weights of one query over the training responses.
#[derive(Debug, Clone)]
pub struct QueryWeights {
    /// Non-negative, sums to one, aligned with the training order.
    pub values: Vec<f64>,
    /// True when every raw kernel value underflowed to zero and the weights
    /// fell back to the nearest fitted value(s).
    pub underflow_fallback: bool,
}

/// A two-sided prediction interval `[lower, upper]` targeting coverage
/// `1 - 2 * alpha`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuantileBand {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
}

/// The distinct sorted response values of a training set, with the mapping
/// from each training index to its knot. Shared by every estimator that
/// inverts a weighted CDF over the same responses.
#[derive(Debug, Clone)]
pub struct ResponseGrid {
    knots: Vec<f64>,
    knot_of: Vec<usize>,
}

impl ResponseGrid {
    pub fn new(responses: &[f64]) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::InvalidInput("no responses".to_string()));
        }
        if responses.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidInput("responses must be finite".to_string()));
        }
        let mut order: Vec<usize> = (0..responses.len()).collect();
        order.sort_unstable_by(|&a, &b| responses[a].total_cmp(&responses[b]));

        let mut knots = Vec::new();
        let mut knot_of = vec![0; responses.len()];
        for &i in &order {
            if knots.last() != Some(&responses[i]) {
                knots.push(responses[i]);
            }
            knot_of[i] = knots.len() - 1;
        }
        Ok(ResponseGrid { knots, knot_of })
    }

    /// Distinct response values, ascending.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knot_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knot_of.is_empty()
    }

    /// Cumulative weight at each knot, rescaled so the last knot is exactly 1.
    fn cumulative(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.knot_of.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} responses",
                weights.len(),
                self.knot_of.len()
            )));
        }
        let mut cum = vec![0.0; self.knots.len()];
        for (i, &w) in weights.iter().enumerate() {
            cum[self.knot_of[i]] += w;
        }
        let mut total = 0.0;
        for c in &mut cum {
            total += *c;
            *c = total;
        }
        if !(total > 0.0) {
            return Err(Error::InvalidInput(
                "weights must have positive total mass".to_string(),
            ));
        }
        for c in &mut cum {
            *c /= total;
        }
        let last = cum.len() - 1;
        cum[last] = 1.0;
        Ok(cum)
    }

    /// CDF of the weighted response distribution at `y`.
    pub fn cdf_from_weights(&self, weights: &[f64], y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("cdf argument {y} not finite")));
        }
        let cum = self.cumulative(weights)?;
        Ok(Self::cdf_at(&self.knots, &cum, y))
    }

    fn cdf_at(knots: &[f64], cum: &[f64], y: f64) -> f64 {
        let idx = knots.partition_point(|&k| k <= y);
        if idx == 0 {
            0.0
        } else {
            cum[idx - 1]
        }
    }

    /// Quantiles of the weighted response distribution, by piecewise-linear
    /// interpolation of the pairs `(cdf(knot), knot)`; clamped to the
    /// outermost knots.
    pub fn quantiles_from_weights(&self, weights: &[f64], alphas: &[f64]) -> Result<Vec<f64>> {
        let cum = self.cumulative(weights)?;
        alphas
            .iter()
            .map(|&alpha| Self::quantile_at(&self.knots, &cum, alpha))
            .collect()
    }

    fn quantile_at(knots: &[f64], cum: &[f64], alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "quantile level must lie in (0, 1), got {alpha}"
            )));
        }
        // First knot whose CDF reaches alpha.
        let idx = cum.partition_point(|&f| f < alpha);
        if idx == 0 {
            return Ok(knots[0]);
        }
        if idx >= knots.len() {
            return Ok(*knots.last().unwrap());
        }
        if cum[idx] == alpha {
            return Ok(knots[idx]);
        }
        let (f0, f1) = (cum[idx - 1], cum[idx]);
        let t = (alpha - f0) / (f1 - f0);
        Ok(knots[idx - 1] + t * (knots[idx] - knots[idx - 1]))
    }
}

/// Kernel-smoothing estimator of the conditional response distribution,
/// indexed by the fitted value of a mean model.
#[derive(Debug, Clone)]
pub struct ConditionalDistributionModel {
    train_fitted: Vec<f64>,
    train_responses: Vec<f64>,
    /// Permutation putting `train_fitted` in ascending order.
    sort_index: Vec<usize>,
    kernel: KernelSpec,
    bandwidth: f64,
    grid: ResponseGrid,
}

impl ConditionalDistributionModel {
    /// Build the estimator, selecting the bandwidth with `rule` applied to
    /// the fitted values.
    pub fn new(
        train_fitted: Vec<f64>,
        train_responses: Vec<f64>,
        kernel: KernelSpec,
        rule: BandwidthRule,
    ) -> Result<Self> {
        let bandwidth = rule.bandwidth(&train_fitted)?;
        Self::with_bandwidth(train_fitted, train_responses, kernel, bandwidth)
    }

    pub fn with_bandwidth(
        train_fitted: Vec<f64>,
        train_responses: Vec<f64>,
        kernel: KernelSpec,
        bandwidth: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        let n = train_fitted.len();
        if n < 2 || train_responses.len() != n {
            return Err(Error::InvalidInput(format!(
                "need at least 2 aligned (fitted, response) pairs; got {} and {}",
                n,
                train_responses.len()
            )));
        }
        if train_fitted.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("fitted values must be finite".to_string()));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be a positive finite number, got {bandwidth}"
            )));
        }
        let grid = ResponseGrid::new(&train_responses)?;
        let mut sort_index: Vec<usize> = (0..n).collect();
        sort_index.sort_unstable_by(|&a, &b| train_fitted[a].total_cmp(&train_fitted[b]));
        Ok(ConditionalDistributionModel {
            train_fitted,
            train_responses,
            sort_index,
            kernel,
            bandwidth,
            grid,
        })
    }

    pub fn len(&self) -> usize {
        self.train_fitted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_fitted.is_empty()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn train_fitted(&self) -> &[f64] {
        &self.train_fitted
    }

    pub fn train_responses(&self) -> &[f64] {
        &self.train_responses
    }

    pub fn sort_index(&self) -> &[usize] {
        &self.sort_index
    }

    pub fn response_grid(&self) -> &ResponseGrid {
        &self.grid
    }

    /// Normalized kernel weights of a query with fitted value `query_fitted`.
    ///
    /// If every raw kernel value underflows to zero (a far-away query under
    /// the Gaussian kernel), the weight collapses onto the nearest fitted
    /// value(s) and the result is flagged.
    pub fn weights(&self, query_fitted: f64) -> Result<QueryWeights> {
        if !query_fitted.is_finite() {
            return Err(Error::InvalidInput(format!(
                "query fitted value {query_fitted} not finite"
            )));
        }
        let mut values: Vec<f64> = self
            .train_fitted
            .iter()
            .map(|&f| kernel_eval_unchecked(self.kernel, (f - query_fitted) / self.bandwidth))
            .collect();
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            for v in &mut values {
                *v /= total;
            }
            return Ok(QueryWeights {
                values,
                underflow_fallback: false,
            });
        }

        // Everything underflowed: spread the mass uniformly over the fitted
        // values nearest the query.
        let min_dist = self
            .train_fitted
            .iter()
            .map(|&f| (f - query_fitted).abs())
            .fold(f64::INFINITY, f64::min);
        let nearest: Vec<usize> = (0..values.len())
            .filter(|&i| (self.train_fitted[i] - query_fitted).abs() == min_dist)
            .collect();
        let w = 1.0 / nearest.len() as f64;
        values.iter_mut().for_each(|v| *v = 0.0);
        for i in nearest {
            values[i] = w;
        }
        Ok(QueryWeights {
            values,
            underflow_fallback: true,
        })
    }

    /// `sum_i w_i(query) * transform(y_i)`.
    pub fn weighted_average(
        &self,
        query_fitted: f64,
        transform: impl Fn(f64) -> f64,
    ) -> Result<f64> {
        let weights = self.weights(query_fitted)?;
        Ok(weights
            .values
            .iter()
            .zip(&self.train_responses)
            .map(|(&w, &y)| w * transform(y))
            .sum())
    }

    /// Estimated conditional CDF at `y` for the given query.
    pub fn cdf(&self, query_fitted: f64, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("cdf argument {y} not finite")));
        }
        let weights = self.weights(query_fitted)?;
        self.grid.cdf_from_weights(&weights.values, y)
    }

    /// Estimated conditional `alpha`-quantile for the given query.
    pub fn quantile(&self, query_fitted: f64, alpha: f64) -> Result<f64> {
        Ok(self.quantiles(query_fitted, &[alpha])?[0])
    }

    /// Quantiles at several levels from a single weight computation.
    pub fn quantiles(&self, query_fitted: f64, alphas: &[f64]) -> Result<Vec<f64>> {
        let weights = self.weights(query_fitted)?;
        self.grid.quantiles_from_weights(&weights.values, alphas)
    }

    /// The interval `[quantile(alpha), quantile(1 - alpha)]`.
    pub fn prediction_interval(&self, query_fitted: f64, alpha: f64) -> Result<QuantileBand> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidInput(format!(
                "interval level must lie in (0, 0.5), got {alpha}"
            )));
        }
        let q = self.quantiles(query_fitted, &[alpha, 1.0 - alpha])?;
        Ok(QuantileBand {
            alpha,
            lower: q[0],
            upper: q[1],
        })
    }
}
