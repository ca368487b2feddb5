//! Data model, losses and the regularized batch cost.
//!
//! The cost over a set of batches is
//! `sum_i weight_i * loss(theta . x_i, y_i) + lambda * S(theta)` with
//! `S(theta) = 0.5 * |theta|^2` for l2 regularization. Cost and gradient are
//! evaluated over fixed example shards and merged with [`crate::reduce`].

use std::fmt;
use std::ops::{Deref, Range};

use crate::error::{Error, Result};
use crate::lbfgs::Objective;
use crate::reduce::{shard_ranges, tree_reduce};

/// Sparse feature vector with strictly increasing indices and finite nonzero values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new(entries: Vec<(u32, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidInput(format!(
                    "sparse indices must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(i, v)) = entries.iter().find(|(_, v)| !v.is_finite() || *v == 0.0) {
            return Err(Error::InvalidInput(format!(
                "sparse value at index {i} must be finite and nonzero, got {v}"
            )));
        }
        Ok(Self { entries })
    }

    /// Builds a vector from unsorted entries, summing duplicates and dropping zeros.
    pub fn from_unsorted(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Self::new(merged)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One past the largest index, or 0 for an empty vector.
    pub fn min_dim(&self) -> usize {
        self.entries.last().map_or(0, |&(i, _)| i as usize + 1)
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| dense[i as usize] * v)
            .sum()
    }
}

/// Binary label in `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(bool);

impl Label {
    pub const ZERO: Label = Label(false);
    pub const ONE: Label = Label(true);

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::ZERO),
            1 => Ok(Label::ONE),
            _ => Err(Error::InvalidInput(format!("label must be 0 or 1, got {v}"))),
        }
    }

    pub fn is_positive(self) -> bool {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        if self.0 {
            1.0
        } else {
            0.0
        }
    }

    /// `+1` for a positive label, `-1` otherwise.
    pub fn sign(self) -> f64 {
        if self.0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl From<bool> for Label {
    fn from(b: bool) -> Self {
        Label(b)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(self.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub label: Label,
    weight: f64,
}

impl Example {
    pub fn new(features: SparseVector, label: Label) -> Self {
        Self {
            features,
            label,
            weight: 1.0,
        }
    }

    pub fn with_weight(features: SparseVector, label: Label, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "example weight must be finite and nonnegative, got {weight}"
            )));
        }
        Ok(Self {
            features,
            label,
            weight,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// A time-indexed batch `(X_t, Y_t)` with at least one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub time_index: usize,
    examples: Vec<Example>,
}

impl Batch {
    pub fn new(time_index: usize, examples: Vec<Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidInput(format!(
                "batch {time_index} has no examples"
            )));
        }
        Ok(Self {
            time_index,
            examples,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn min_dim(&self) -> usize {
        self.examples
            .iter()
            .map(|e| e.features.min_dim())
            .max()
            .unwrap_or(0)
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }
}

/// Time-ordered batches with contiguous indices starting at 0, all within `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    dim: usize,
    batches: Vec<Batch>,
}

impl Stream {
    pub fn new(dim: usize, batches: Vec<Batch>) -> Result<Self> {
        for (t, b) in batches.iter().enumerate() {
            if b.time_index != t {
                return Err(Error::Sequencing {
                    expected: t,
                    got: b.time_index,
                });
            }
            let need = b.min_dim();
            if need > dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: need,
                });
            }
        }
        Ok(Self { dim, batches })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn example_count(&self) -> usize {
        self.batches.iter().map(Batch::len).sum()
    }

    pub fn examples(&self) -> impl Iterator<Item = &Example> {
        self.batches.iter().flat_map(|b| b.examples().iter())
    }
}

/// Dense weight vector `theta` with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("parameter entry {i}")));
        }
        Ok(Self(weights))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn from_vec_unchecked(weights: Vec<f64>) -> Self {
        Self(weights)
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Logistic,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    None,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostConfig {
    pub loss: LossKind,
    pub reg: RegKind,
    pub reg_strength: f64,
}

impl CostConfig {
    pub fn new(loss: LossKind, reg: RegKind, reg_strength: f64) -> Result<Self> {
        let cfg = Self {
            loss,
            reg,
            reg_strength,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn logistic_l2(lambda: f64) -> Self {
        Self {
            loss: LossKind::Logistic,
            reg: RegKind::L2,
            reg_strength: lambda,
        }
    }

    pub fn squared_l2(lambda: f64) -> Self {
        Self {
            loss: LossKind::Squared,
            reg: RegKind::L2,
            reg_strength: lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reg_strength.is_finite() && self.reg_strength >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "regularization strength must be finite and >= 0, got {}",
                self.reg_strength
            )));
        }
        Ok(())
    }

    /// Effective l2 coefficient (0 when regularization is off).
    pub fn l2(&self) -> f64 {
        match self.reg {
            RegKind::None => 0.0,
            RegKind::L2 => self.reg_strength,
        }
    }

    pub fn regularizer(&self, theta: &[f64]) -> f64 {
        let lambda = self.l2();
        if lambda == 0.0 {
            return 0.0;
        }
        0.5 * lambda * theta.iter().map(|v| v * v).sum::<f64>()
    }

    /// The same configuration with the regularizer strength multiplied by `factor`.
    pub fn scaled_reg(&self, factor: f64) -> Self {
        Self {
            reg_strength: self.reg_strength * factor,
            ..*self
        }
    }
}

/// Sparse dot product `theta . x`.
pub fn predict(theta: &[f64], x: &SparseVector) -> Result<f64> {
    let need = x.min_dim();
    if need > theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: need,
        });
    }
    Ok(x.dot_unchecked(theta))
}

/// Loss of margin `z` against label `y`.
pub fn loss(kind: LossKind, z: f64, y: Label) -> f64 {
    match kind {
        LossKind::Logistic => {
            let m = y.sign() * z;
            (-m.abs()).exp().ln_1p() + (-m).max(0.0)
        }
        LossKind::Squared => {
            let r = z - y.as_f64();
            r * r
        }
    }
}

/// Derivative of [`loss`] with respect to `z`.
pub fn loss_derivative(kind: LossKind, z: f64, y: Label) -> f64 {
    match kind {
        LossKind::Logistic => {
            let s = y.sign();
            -s * sigmoid(-s * z)
        }
        LossKind::Squared => 2.0 * (z - y.as_f64()),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Maps a margin to the model's prediction: a probability for logistic, the
/// margin itself for squared loss.
pub fn prediction(kind: LossKind, z: f64) -> f64 {
    match kind {
        LossKind::Logistic => sigmoid(z),
        LossKind::Squared => z,
    }
}

fn check_dim(dim: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: theta.len(),
        });
    }
    Ok(())
}

/// Regularized cost over a fixed set of examples, evaluated shard-parallel.
pub struct ExampleObjective<'a> {
    examples: Vec<&'a Example>,
    dim: usize,
    cfg: CostConfig,
    shards: Vec<Range<usize>>,
}

impl<'a> ExampleObjective<'a> {
    pub fn new<I>(dim: usize, examples: I, cfg: CostConfig) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Example>,
    {
        cfg.validate()?;
        let examples: Vec<&Example> = examples.into_iter().collect();
        if let Some(need) = examples.iter().map(|e| e.features.min_dim()).max() {
            if need > dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: need,
                });
            }
        }
        let shards = shard_ranges(examples.len());
        Ok(Self {
            examples,
            dim,
            cfg,
            shards,
        })
    }

    pub fn from_batches(dim: usize, batches: &'a [Batch], cfg: CostConfig) -> Result<Self> {
        Self::new(dim, batches.iter().flat_map(|b| b.examples()), cfg)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn config(&self) -> &CostConfig {
        &self.cfg
    }

    pub fn cost(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim, theta)?;
        let kind = self.cfg.loss;
        let leaf = |r: Range<usize>| {
            self.examples[r]
                .iter()
                .map(|e| e.weight() * loss(kind, e.features.dot_unchecked(theta), e.label))
                .sum::<f64>()
        };
        let data = tree_reduce(&self.shards, &leaf, &|a, b| a + b).unwrap_or(0.0);
        Ok(data + self.cfg.regularizer(theta))
    }

    /// Writes the gradient into `grad` and returns the cost.
    pub fn cost_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_dim(self.dim, theta)?;
        check_dim(self.dim, grad)?;
        let kind = self.cfg.loss;
        let dim = self.dim;
        let leaf = |r: Range<usize>| {
            let mut g = vec![0.0; dim];
            let mut c = 0.0;
            for e in &self.examples[r] {
                let z = e.features.dot_unchecked(theta);
                c += e.weight() * loss(kind, z, e.label);
                let d = e.weight() * loss_derivative(kind, z, e.label);
                if d != 0.0 {
                    for &(i, v) in e.features.entries() {
                        g[i as usize] += d * v;
                    }
                }
            }
            (c, g)
        };
        let combine = |(ca, mut ga): (f64, Vec<f64>), (cb, gb): (f64, Vec<f64>)| {
            for (a, b) in ga.iter_mut().zip(&gb) {
                *a += b;
            }
            (ca + cb, ga)
        };
        let lambda = self.cfg.l2();
        match tree_reduce(&self.shards, &leaf, &combine) {
            Some((c, g)) => {
                for ((out, gi), t) in grad.iter_mut().zip(g).zip(theta) {
                    *out = gi + lambda * t;
                }
                Ok(c + self.cfg.regularizer(theta))
            }
            None => {
                for (out, t) in grad.iter_mut().zip(theta) {
                    *out = lambda * t;
                }
                Ok(self.cfg.regularizer(theta))
            }
        }
    }
}

impl Objective for ExampleObjective<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.cost_and_gradient(theta, grad)
    }
}

/// Regularized cost summed over `batches` with a single regularizer term.
pub fn batch_cost(theta: &ParameterVector, batches: &[Batch], cfg: &CostConfig) -> Result<f64> {
    ExampleObjective::from_batches(theta.dim(), batches, *cfg)?.cost(theta)
}

/// Analytic gradient of [`batch_cost`].
pub fn batch_gradient(
    theta: &ParameterVector,
    batches: &[Batch],
    cfg: &CostConfig,
) -> Result<ParameterVector> {
    let obj = ExampleObjective::from_batches(theta.dim(), batches, *cfg)?;
    let mut grad = vec![0.0; theta.dim()];
    obj.cost_and_gradient(theta, &mut grad)?;
    Ok(ParameterVector::from_vec_unchecked(grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sv(entries: &[(u32, f64)]) -> SparseVector {
        SparseVector::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn sparse_vector_rejects_bad_entries() {
        assert!(SparseVector::new(vec![(3, 1.0), (3, 2.0)]).is_err());
        assert!(SparseVector::new(vec![(4, 1.0), (3, 2.0)]).is_err());
        assert!(SparseVector::new(vec![(1, 0.0)]).is_err());
        assert!(SparseVector::new(vec![(1, f64::NAN)]).is_err());
        let merged = SparseVector::from_unsorted(vec![(5, 1.0), (2, 1.0), (5, 0.5), (7, 1.0), (7, -1.0)])
            .unwrap();
        assert_eq!(merged.entries(), &[(2, 1.0), (5, 1.5)]);
    }

    #[test]
    fn predict_examples() {
        let x = sv(&[(0, 1.0), (1, 0.5)]);
        assert_eq!(predict(&[0.0; 3], &x).unwrap(), 0.0);
        assert_eq!(predict(&[1.0, 2.0, 0.0], &x).unwrap(), 2.0);
        assert_eq!(predict(&[1.0, 2.0, 0.0], &SparseVector::empty()).unwrap(), 0.0);
        assert!(matches!(
            predict(&[1.0], &x),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn loss_examples() {
        assert_relative_eq!(
            loss(LossKind::Logistic, 0.0, Label::ONE),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert!(loss(LossKind::Logistic, 50.0, Label::ONE) < 1e-20);
        assert_relative_eq!(loss(LossKind::Squared, 0.3, Label::ONE), 0.49, epsilon = 1e-15);
        // no overflow on extreme margins
        let big = loss(LossKind::Logistic, -800.0, Label::ONE);
        assert_relative_eq!(big, 800.0, epsilon = 1e-9);
        assert!(loss(LossKind::Logistic, 800.0, Label::ZERO).is_finite());
    }

    #[test]
    fn regularizer_only_cost() {
        let theta = ParameterVector::new(vec![3.0, 4.0]).unwrap();
        let cfg = CostConfig::logistic_l2(1.0);
        assert_relative_eq!(batch_cost(&theta, &[], &cfg).unwrap(), 12.5);
    }

    #[test]
    fn perfect_fit_has_zero_squared_cost() {
        let theta = ParameterVector::new(vec![1.0, -1.0]).unwrap();
        let ex = vec![
            Example::new(sv(&[(0, 1.0)]), Label::ONE),
            Example::new(sv(&[(0, 1.0), (1, 1.0)]), Label::ZERO),
        ];
        let batches = vec![Batch::new(0, ex).unwrap()];
        let cfg = CostConfig::new(LossKind::Squared, RegKind::None, 0.0).unwrap();
        assert_eq!(batch_cost(&theta, &batches, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn l2_gradient_contribution_is_lambda_theta() {
        let theta = ParameterVector::new(vec![0.5, -1.5, 2.0]).unwrap();
        let ex = vec![
            Example::new(sv(&[(0, 1.0), (2, -0.5)]), Label::ONE),
            Example::new(sv(&[(1, 2.0)]), Label::ZERO),
        ];
        let batches = vec![Batch::new(0, ex).unwrap()];
        let g0 = batch_gradient(&theta, &batches, &CostConfig::logistic_l2(0.0)).unwrap();
        let g1 = batch_gradient(&theta, &batches, &CostConfig::logistic_l2(0.7)).unwrap();
        for i in 0..3 {
            assert_relative_eq!(g1[i] - g0[i], 0.7 * theta[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn dimension_errors_surface() {
        let theta = ParameterVector::zeros(2);
        let batches = vec![Batch::new(0, vec![Example::new(sv(&[(5, 1.0)]), Label::ONE)]).unwrap()];
        assert!(matches!(
            batch_cost(&theta, &batches, &CostConfig::logistic_l2(0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Batch::new(0, vec![]).is_err());
        assert!(Example::with_weight(SparseVector::empty(), Label::ONE, -1.0).is_err());
        assert!(CostConfig::new(LossKind::Squared, RegKind::L2, -0.1).is_err());
    }

    #[test]
    fn stream_requires_contiguous_indices() {
        let b = |t| Batch::new(t, vec![Example::new(SparseVector::empty(), Label::ONE)]).unwrap();
        assert!(Stream::new(1, vec![b(0), b(1)]).is_ok());
        assert!(matches!(
            Stream::new(1, vec![b(0), b(2)]),
            Err(Error::Sequencing { expected: 1, got: 2 })
        ));
    }
}
