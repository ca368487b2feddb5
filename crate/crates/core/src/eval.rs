//! Evaluation: ROC AUC, error rates and regret against a fixed comparator.

use crate::driver::{mismatch, MismatchMode};
use crate::error::{Error, Result};
use crate::lbfgs::{minimize, CurvatureMemory, LbfgsConfig};
use crate::model::{batch_cost, Batch, CostConfig, Label, ParameterVector, Stream};

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pairs: Vec<(f64, Label)>,
}

impl ScoredSet {
    pub fn new(pairs: Vec<(f64, Label)>) -> Result<Self> {
        if pairs.iter().any(|(s, _)| !s.is_finite()) {
            return Err(Error::NonFinite("score".into()));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(f64, Label)] {
        &self.pairs
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|(_, l)| l.is_positive()).count()
    }
}

/// Area under the ROC curve with ties counted one half.
///
/// Scores are swept from high to low; each group of tied scores contributes a
/// trapezoid. The area is accumulated in integer half-units so the result is
/// exactly the pair-counting probability up to the final division.
pub fn auc(scored: &ScoredSet) -> Result<f64> {
    let p = scored.positives() as u128;
    let n = scored.pairs.len() as u128 - p;
    if p == 0 || n == 0 {
        return Err(Error::OneClass);
    }
    let mut order: Vec<usize> = (0..scored.pairs.len()).collect();
    order.sort_by(|&a, &b| {
        scored.pairs[b]
            .0
            .total_cmp(&scored.pairs[a].0)
            .then(a.cmp(&b))
    });
    let mut tp = 0u128;
    let mut twice_area = 0u128;
    let mut i = 0;
    while i < order.len() {
        let score = scored.pairs[order[i]].0;
        let (mut gp, mut gn) = (0u128, 0u128);
        while i < order.len() && scored.pairs[order[i]].0 == score {
            if scored.pairs[order[i]].1.is_positive() {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // trapezoid of width gn between heights tp and tp + gp
        twice_area += gn * (2 * tp + gp);
        tp += gp;
    }
    Ok(twice_area as f64 / (2 * p * n) as f64)
}

/// Fraction of examples mispredicted, in either mismatch mode.
pub fn error_rate(theta: &[f64], batches: &[Batch], cfg: &CostConfig, mode: MismatchMode) -> Result<f64> {
    mismatch(batches, theta, cfg.loss, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub theta_star: ParameterVector,
    /// `phi_s(theta_s) - phi_s(theta*)` per batch.
    pub per_step: Vec<f64>,
    /// Running sums of `per_step`.
    pub cumulative: Vec<f64>,
}

impl RegretReport {
    /// `R(t) / (t + 1)` for every batch.
    pub fn average(&self) -> Vec<f64> {
        self.cumulative
            .iter()
            .enumerate()
            .map(|(t, r)| r / (t + 1) as f64)
            .collect()
    }
}

/// Per-batch cost `phi_s(theta) = f_s(theta) + lambda S(theta)`.
pub fn step_cost(theta: &ParameterVector, batch: &Batch, cfg: &CostConfig) -> Result<f64> {
    batch_cost(theta, std::slice::from_ref(batch), cfg)
}

/// Regret of `thetas` (one per batch) against `theta_star`.
pub fn regret(
    thetas: &[ParameterVector],
    stream: &Stream,
    cfg: &CostConfig,
    theta_star: &ParameterVector,
) -> Result<RegretReport> {
    if thetas.len() != stream.len() {
        return Err(Error::DimensionMismatch {
            expected: stream.len(),
            got: thetas.len(),
        });
    }
    let mut per_step = Vec::with_capacity(thetas.len());
    for (theta, batch) in thetas.iter().zip(stream.batches()) {
        per_step.push(step_cost(theta, batch, cfg)? - step_cost(theta_star, batch, cfg)?);
    }
    let cumulative = per_step
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    Ok(RegretReport {
        theta_star: theta_star.clone(),
        per_step,
        cumulative,
    })
}

/// Tolerance used for the offline comparator.
pub const ORACLE_GRAD_TOLERANCE: f64 = 1e-9;

/// Minimizer of `sum_s phi_s` over the whole stream, i.e. all examples with the
/// regularizer counted once per batch.
pub fn oracle_theta_star(stream: &Stream, cfg: &CostConfig) -> Result<ParameterVector> {
    let joint = cfg.scaled_reg(stream.len() as f64);
    let obj = crate::model::ExampleObjective::new(stream.dim(), stream.examples(), joint)?;
    let lbfgs = LbfgsConfig {
        max_iterations: 5000,
        grad_tolerance: ORACLE_GRAD_TOLERANCE,
        max_line_search_steps: 40,
        ..LbfgsConfig::default()
    };
    let result = minimize(&obj, &ParameterVector::zeros(stream.dim()), CurvatureMemory::new(20), &lbfgs)?;
    if !result.converged {
        return Err(Error::NotConverged {
            grad_norm: result.final_grad_norm,
        });
    }
    Ok(result.theta)
}
