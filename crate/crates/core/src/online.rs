//! Single-pass online learners: plain online gradient descent and diagonal ADAGRAD.
//!
//! Each example is visited once, in stream order. The regularizer enters the
//! per-example gradient as `lambda * theta` on every coordinate.

use crate::error::{Error, Result};
use crate::model::{loss, loss_derivative, CostConfig, Example, ParameterVector, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `eta0 / sqrt(t + 1)`.
    InvSqrt(f64),
}

impl StepSchedule {
    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::InvSqrt(eta0) => eta0 / ((t + 1) as f64).sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        let eta = match *self {
            StepSchedule::Constant(e) | StepSchedule::InvSqrt(e) => e,
        };
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {eta}"
            )));
        }
        Ok(())
    }
}

/// Per-example gradient including the full l2 term. Returns the example's loss.
fn example_gradient(
    theta: &[f64],
    example: &Example,
    cfg: &CostConfig,
    grad: &mut Vec<(usize, f64)>,
) -> Result<f64> {
    let need = example.features.min_dim();
    if need > theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: need,
        });
    }
    let z = example.features.dot_unchecked(theta);
    let w = example.weight();
    let d = w * loss_derivative(cfg.loss, z, example.label);
    if !d.is_finite() {
        return Err(Error::NonFinite("per-example gradient".into()));
    }
    grad.clear();
    let lambda = cfg.l2();
    if lambda > 0.0 {
        grad.extend(theta.iter().enumerate().map(|(i, t)| (i, lambda * t)));
        for &(i, v) in example.features.entries() {
            grad[i as usize].1 += d * v;
        }
        grad.retain(|&(_, g)| g != 0.0);
    } else if d != 0.0 {
        grad.extend(example.features.entries().iter().map(|&(i, v)| (i as usize, d * v)));
    }
    Ok(w * loss(cfg.loss, z, example.label))
}

/// Common interface of the online baselines.
pub trait OnlineLearner {
    /// Applies one update and returns the loss suffered before it.
    fn step(&mut self, example: &Example, cfg: &CostConfig) -> Result<f64>;
    fn theta(&self) -> &[f64];
}

#[derive(Debug, Clone)]
pub struct OgdState {
    pub theta: Vec<f64>,
    pub schedule: StepSchedule,
    pub t: u64,
    scratch: Vec<(usize, f64)>,
}

impl OgdState {
    pub fn new(theta: ParameterVector, schedule: StepSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            theta: theta.into_inner(),
            schedule,
            t: 0,
            scratch: Vec::new(),
        })
    }

    /// `theta <- theta - eta_t * grad`.
    pub fn ogd_step(&mut self, example: &Example, cfg: &CostConfig) -> Result<f64> {
        let mut grad = std::mem::take(&mut self.scratch);
        let l = example_gradient(&self.theta, example, cfg, &mut grad)?;
        let eta = self.schedule.rate(self.t);
        for &(i, g) in &grad {
            self.theta[i] -= eta * g;
        }
        self.scratch = grad;
        self.t += 1;
        Ok(l)
    }
}

impl OnlineLearner for OgdState {
    fn step(&mut self, example: &Example, cfg: &CostConfig) -> Result<f64> {
        self.ogd_step(example, cfg)
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }
}

#[derive(Debug, Clone)]
pub struct AdagradState {
    pub theta: Vec<f64>,
    accum: Vec<f64>,
    pub eta: f64,
    pub epsilon: f64,
    scratch: Vec<(usize, f64)>,
}

impl AdagradState {
    pub fn new(theta: ParameterVector, eta: f64, epsilon: f64) -> Result<Self> {
        StepSchedule::Constant(eta).validate()?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "adagrad epsilon must be positive, got {epsilon}"
            )));
        }
        let dim = theta.dim();
        Ok(Self {
            theta: theta.into_inner(),
            accum: vec![0.0; dim],
            eta,
            epsilon,
            scratch: Vec::new(),
        })
    }

    /// Diagonal of the accumulated gradient outer products.
    pub fn accumulator(&self) -> &[f64] {
        &self.accum
    }

    pub fn effective_rate(&self, i: usize) -> f64 {
        self.eta / (self.accum[i] + self.epsilon).sqrt()
    }

    pub fn adagrad_step(&mut self, example: &Example, cfg: &CostConfig) -> Result<f64> {
        let mut grad = std::mem::take(&mut self.scratch);
        let l = example_gradient(&self.theta, example, cfg, &mut grad)?;
        for &(i, g) in &grad {
            self.accum[i] += g * g;
            self.theta[i] -= self.eta * g / (self.accum[i] + self.epsilon).sqrt();
        }
        self.scratch = grad;
        Ok(l)
    }
}

impl OnlineLearner for AdagradState {
    fn step(&mut self, example: &Example, cfg: &CostConfig) -> Result<f64> {
        self.adagrad_step(example, cfg)
    }

    fn theta(&self) -> &[f64] {
        &self.theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Learner {
    Ogd(StepSchedule),
    Adagrad { eta: f64, epsilon: f64 },
}

impl Learner {
    pub fn build(&self, dim: usize) -> Result<Box<dyn OnlineLearner>> {
        let theta = ParameterVector::zeros(dim);
        Ok(match *self {
            Learner::Ogd(schedule) => Box::new(OgdState::new(theta, schedule)?),
            Learner::Adagrad { eta, epsilon } => Box::new(AdagradState::new(theta, eta, epsilon)?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub theta: ParameterVector,
    /// Loss of every example, measured just before its update.
    pub losses: Vec<f64>,
    /// Parameter in force when each batch began.
    pub batch_start_thetas: Vec<ParameterVector>,
    /// Parameter after each batch was consumed.
    pub batch_end_thetas: Vec<ParameterVector>,
}

/// Feeds `examples` through `learner` once, in order.
pub fn run_examples<'a, I>(learner: &mut dyn OnlineLearner, examples: I, cfg: &CostConfig) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a Example>,
{
    examples.into_iter().map(|e| learner.step(e, cfg)).collect()
}

/// Single pass over `stream` with a fresh learner started at zero.
pub fn run_online(stream: &Stream, learner: Learner, cfg: &CostConfig) -> Result<OnlineRun> {
    if stream.is_empty() {
        return Err(Error::Empty("online run"));
    }
    let mut state = learner.build(stream.dim())?;
    let mut losses = Vec::with_capacity(stream.example_count());
    let mut starts = Vec::with_capacity(stream.len());
    let mut ends = Vec::with_capacity(stream.len());
    for batch in stream.batches() {
        starts.push(ParameterVector::new(state.theta().to_vec())?);
        losses.extend(run_examples(state.as_mut(), batch.examples(), cfg)?);
        ends.push(ParameterVector::new(state.theta().to_vec())?);
    }
    Ok(OnlineRun {
        theta: ends.last().cloned().expect("stream is non-empty"),
        losses,
        batch_start_thetas: starts,
        batch_end_thetas: ends,
    })
}
