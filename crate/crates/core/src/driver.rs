//! The statistically adaptive L-BFGS driver.
//!
//! For every incoming batch the driver measures how much worse the current
//! parameter does once the new batch is included (the mismatch statistic),
//! compares the jump against the spread of earlier mismatch values, and only
//! then retrains. A retrain mixes a reservoir sample of old examples with a
//! sample of the new batch, sized by the jump, and warm-starts L-BFGS from the
//! previous parameter and curvature memory.

use std::ops::Range;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lbfgs::{minimize, CurvatureMemory, LbfgsConfig, OptimizeResult};
use crate::model::{prediction, Batch, CostConfig, Example, ExampleObjective, LossKind, ParameterVector, Stream};
use crate::reduce::{shard_ranges, tree_reduce};

/// How a single prediction is compared with its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MismatchMode {
    /// `|p(x) - y|`.
    #[default]
    Absolute,
    /// 1 when `(p(x) > 0.5) != y`, else 0.
    Thresholded,
}

/// Where the past-data term of the mismatch comes from after a retrain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PastEval {
    #[default]
    Reservoir,
    /// Keep every past batch and evaluate it exactly.
    Exact,
}

#[inline]
fn point_mismatch(kind: LossKind, mode: MismatchMode, z: f64, e: &Example) -> f64 {
    let p = prediction(kind, z);
    match mode {
        MismatchMode::Absolute => (p - e.label.as_f64()).abs(),
        MismatchMode::Thresholded => f64::from(u8::from((p > 0.5) != e.label.is_positive())),
    }
}

/// Sum of per-example mismatches, reduced over fixed shards.
pub fn mismatch_sum(examples: &[&Example], theta: &[f64], kind: LossKind, mode: MismatchMode) -> Result<f64> {
    if let Some(need) = examples.iter().map(|e| e.features.min_dim()).max() {
        if need > theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: need,
            });
        }
    }
    let shards = shard_ranges(examples.len());
    let leaf = |r: Range<usize>| {
        examples[r]
            .iter()
            .map(|e| point_mismatch(kind, mode, e.features.dot_unchecked(theta), e))
            .sum::<f64>()
    };
    Ok(tree_reduce(&shards, &leaf, &|a, b| a + b).unwrap_or(0.0))
}

/// Mismatch statistic over every example in `batches`: total deviation over example count.
pub fn mismatch(batches: &[Batch], theta: &[f64], kind: LossKind, mode: MismatchMode) -> Result<f64> {
    let examples: Vec<&Example> = batches.iter().flat_map(|b| b.examples()).collect();
    mean_mismatch(&examples, theta, kind, mode)
}

fn mean_mismatch(examples: &[&Example], theta: &[f64], kind: LossKind, mode: MismatchMode) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("mismatch"));
    }
    Ok(mismatch_sum(examples, theta, kind, mode)? / examples.len() as f64)
}

/// Series of post-update mismatch values with a running population variance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MismatchHistory {
    values: Vec<f64>,
    mean: f64,
    m2: f64,
}

impl MismatchHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.values.push(value);
        let n = self.values.len() as f64;
        let delta = value - self.mean;
        self.mean += delta / n;
        self.m2 += delta * (value - self.mean);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    pub fn sigma(&self) -> Result<f64> {
        sigma(self)
    }
}

/// Population standard deviation of the stored values.
pub fn sigma(history: &MismatchHistory) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Empty("sigma"));
    }
    Ok((history.m2.max(0.0) / history.len() as f64).sqrt())
}

/// Retrain iff the mismatch jump strictly exceeds `sigma_t`.
pub fn should_retrain(i_new: f64, i_old: f64, sigma_t: f64) -> bool {
    i_new - i_old > sigma_t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub m_max: usize,
    pub m_old_min: usize,
    pub reservoir_capacity: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            m_max: 100_000,
            m_old_min: 100,
            reservoir_capacity: 20_000,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_max == 0 {
            return Err(Error::InvalidConfig("m_max must be at least 1".into()));
        }
        if self.m_old_min > self.reservoir_capacity {
            return Err(Error::InvalidConfig(format!(
                "m_old_min ({}) exceeds reservoir capacity ({})",
                self.m_old_min, self.reservoir_capacity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSizes {
    pub m_old: usize,
    pub m_new: usize,
}

/// Picks `(M_old, M_new)` from the mismatch jump.
///
/// `M_new = min(batch, m_max)` and `M_old = ceil(M_new * sigma / delta)`
/// clamped to `[m_old_min, occupancy]`. When `delta <= sigma` (a forced
/// cold-start retrain) the ratio is taken as 1.
pub fn choose_sample_sizes(
    delta: f64,
    sigma_t: f64,
    m_new_batch: usize,
    occupancy: usize,
    cfg: &SamplerConfig,
) -> SampleSizes {
    let m_new = m_new_batch.min(cfg.m_max);
    let ratio = if delta > sigma_t && delta > 0.0 {
        sigma_t / delta
    } else {
        1.0
    };
    let wanted = (m_new as f64 * ratio).ceil() as usize;
    let m_old = wanted.max(cfg.m_old_min).min(occupancy);
    SampleSizes { m_old, m_new }
}

/// Uniform fixed-capacity sample of every example offered so far (Algorithm R).
#[derive(Debug, Clone)]
pub struct Reservoir {
    items: Vec<Example>,
    capacity: usize,
    seen: u64,
    rng: ChaCha8Rng,
}

impl Reservoir {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn offer(&mut self, example: &Example) {
        if self.items.len() < self.capacity {
            self.items.push(example.clone());
        } else if self.capacity > 0 {
            let j = self.rng.random_range(0..=self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = example.clone();
            }
        }
        self.seen += 1;
    }

    pub fn absorb(&mut self, examples: &[Example]) {
        for e in examples {
            self.offer(e);
        }
    }

    pub fn items(&self) -> &[Example] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }
}

/// A retraining subsample: old points first, then new points.
#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    pub old: Vec<&'a Example>,
    pub new: Vec<&'a Example>,
    /// Positions in the new batch that were selected, ascending.
    pub new_indices: Vec<usize>,
}

impl<'a> TrainingSet<'a> {
    pub fn len(&self) -> usize {
        self.old.len() + self.new.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old.is_empty() && self.new.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a Example> + '_ {
        self.old.iter().chain(&self.new).copied()
    }
}

fn draw(len: usize, amount: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if amount > len {
        return Err(Error::SampleSize {
            requested: amount,
            available: len,
        });
    }
    if amount == len {
        return Ok((0..len).collect());
    }
    let mut picked = index::sample(rng, len, amount).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Uniform sampling without replacement from each pool, deterministic in `seed`.
pub fn subsample<'a>(
    old_pool: &'a [Example],
    new_batch: &'a [Example],
    sizes: SampleSizes,
    seed: u64,
) -> Result<TrainingSet<'a>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let old_idx = draw(old_pool.len(), sizes.m_old, &mut rng)?;
    let new_idx = draw(new_batch.len(), sizes.m_new, &mut rng)?;
    Ok(TrainingSet {
        old: old_idx.iter().map(|&i| &old_pool[i]).collect(),
        new: new_idx.iter().map(|&i| &new_batch[i]).collect(),
        new_indices: new_idx,
    })
}

/// SplitMix64 finalizer, used to derive per-batch seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const RESERVOIR_SALT: u64 = 0x5245_5345_5256_4F49;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverConfig {
    pub cost: CostConfig,
    pub lbfgs: LbfgsConfig,
    pub memory_capacity: usize,
    pub sampler: SamplerConfig,
    pub mismatch_mode: MismatchMode,
    pub past_eval: PastEval,
    /// Drop the curvature memory before every retrain.
    pub reset_memory: bool,
    /// Scale subsample weights up to the sizes of the pools they came from.
    pub reweight: bool,
    /// Batches at the start of the stream that always retrain.
    pub cold_start_batches: usize,
}

impl DriverConfig {
    pub fn new(cost: CostConfig) -> Self {
        Self {
            cost,
            lbfgs: LbfgsConfig::default(),
            memory_capacity: CurvatureMemory::DEFAULT_CAPACITY,
            sampler: SamplerConfig::default(),
            mismatch_mode: MismatchMode::Absolute,
            past_eval: PastEval::Reservoir,
            reset_memory: false,
            reweight: false,
            cold_start_batches: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        self.lbfgs.validate()?;
        self.sampler.validate()?;
        if self.memory_capacity == 0 {
            return Err(Error::InvalidConfig("memory capacity must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the per-batch trace.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub t: usize,
    /// Mismatch with the new batch included, before any update.
    pub i_before: f64,
    /// Mismatch after the update; this is what enters the history.
    pub i_after: f64,
    pub retrained: bool,
    pub m_old: usize,
    pub m_new: usize,
    pub grad_evals: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct DriverState {
    cfg: DriverConfig,
    dim: usize,
    theta: ParameterVector,
    memory: CurvatureMemory,
    history: MismatchHistory,
    reservoir: Reservoir,
    past: Vec<Batch>,
    past_count: usize,
    next_t: usize,
    retrains: usize,
    grad_evals: usize,
}

/// Decision and sample sizes for an incoming batch, before any training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerDecision {
    pub i_old: f64,
    pub i_new: f64,
    pub sigma: f64,
    pub retrain: bool,
    pub sizes: SampleSizes,
}

impl DriverState {
    pub fn new(dim: usize, cfg: DriverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            dim,
            theta: ParameterVector::zeros(dim),
            memory: CurvatureMemory::new(cfg.memory_capacity),
            history: MismatchHistory::new(),
            reservoir: Reservoir::new(
                cfg.sampler.reservoir_capacity,
                mix_seed(cfg.sampler.seed, RESERVOIR_SALT),
            ),
            past: Vec::new(),
            past_count: 0,
            next_t: 0,
            retrains: 0,
            grad_evals: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &DriverConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    pub fn memory(&self) -> &CurvatureMemory {
        &self.memory
    }

    pub fn history(&self) -> &MismatchHistory {
        &self.history
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    /// Time index the next batch must carry.
    pub fn next_time_index(&self) -> usize {
        self.next_t
    }

    pub fn retrains(&self) -> usize {
        self.retrains
    }

    pub fn grad_evals(&self) -> usize {
        self.grad_evals
    }

    fn mode(&self) -> (LossKind, MismatchMode) {
        (self.cfg.cost.loss, self.cfg.mismatch_mode)
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.time_index != self.next_t {
            return Err(Error::Sequencing {
                expected: self.next_t,
                got: batch.time_index,
            });
        }
        let need = batch.min_dim();
        if need > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: need,
            });
        }
        Ok(())
    }

    fn batch_sum(&self, batch: &Batch, theta: &[f64]) -> Result<f64> {
        let (kind, mode) = self.mode();
        let refs: Vec<&Example> = batch.examples().iter().collect();
        mismatch_sum(&refs, theta, kind, mode)
    }

    /// Mean mismatch of `theta` on everything absorbed before the current batch.
    fn past_mean(&self, theta: &[f64]) -> Result<f64> {
        let (kind, mode) = self.mode();
        let refs: Vec<&Example> = match self.cfg.past_eval {
            PastEval::Exact => self.past.iter().flat_map(|b| b.examples()).collect(),
            PastEval::Reservoir => self.reservoir.items().iter().collect(),
        };
        mean_mismatch(&refs, theta, kind, mode)
    }

    /// Computes the mismatch jump for `batch` and whether it triggers a retrain.
    pub fn evaluate_trigger(&self, batch: &Batch) -> Result<TriggerDecision> {
        self.check_batch(batch)?;
        let new_sum = self.batch_sum(batch, &self.theta)?;
        let m = batch.len();
        let Some(i_old) = self.history.last() else {
            return Ok(TriggerDecision {
                i_old: f64::NAN,
                i_new: new_sum / m as f64,
                sigma: 0.0,
                retrain: true,
                sizes: SampleSizes { m_old: 0, m_new: m },
            });
        };
        let total = (self.past_count + m) as f64;
        let i_new = (self.past_count as f64 * i_old + new_sum) / total;
        let sigma = self.history.sigma()?;
        let retrain = self.history.len() < self.cfg.cold_start_batches || should_retrain(i_new, i_old, sigma);
        let sizes = choose_sample_sizes(i_new - i_old, sigma, m, self.reservoir.len(), &self.cfg.sampler);
        Ok(TriggerDecision {
            i_old,
            i_new,
            sigma,
            retrain,
            sizes,
        })
    }

    fn retrain_on(&self, set: &TrainingSet<'_>, batch_len: usize) -> Result<OptimizeResult> {
        let memory = if self.cfg.reset_memory {
            CurvatureMemory::new(self.cfg.memory_capacity)
        } else {
            self.memory.clone()
        };
        if self.cfg.reweight && !set.is_empty() {
            let old_scale = if set.old.is_empty() {
                1.0
            } else {
                self.past_count as f64 / set.old.len() as f64
            };
            let new_scale = batch_len as f64 / set.new.len().max(1) as f64;
            let weighted: Vec<Example> = set
                .old
                .iter()
                .map(|e| (e, old_scale))
                .chain(set.new.iter().map(|e| (e, new_scale)))
                .map(|(e, s)| Example::with_weight(e.features.clone(), e.label, e.weight() * s))
                .collect::<Result<_>>()?;
            let obj = ExampleObjective::new(self.dim, &weighted, self.cfg.cost)?;
            minimize(&obj, &self.theta, memory, &self.cfg.lbfgs)
        } else {
            let obj = ExampleObjective::new(self.dim, set.iter(), self.cfg.cost)?;
            minimize(&obj, &self.theta, memory, &self.cfg.lbfgs)
        }
    }

    /// Absorbs one batch: evaluate the trigger, retrain if needed, update history.
    pub fn process_batch(&mut self, batch: &Batch) -> Result<BatchRecord> {
        let started = Instant::now();
        let decision = self.evaluate_trigger(batch)?;
        let t = batch.time_index;
        let m = batch.len();
        let mut record = BatchRecord {
            t,
            i_before: decision.i_new,
            i_after: decision.i_new,
            retrained: false,
            m_old: 0,
            m_new: 0,
            grad_evals: 0,
            seconds: 0.0,
        };

        if self.history.is_empty() {
            let obj = ExampleObjective::new(self.dim, batch.examples(), self.cfg.cost)?;
            let result = minimize(&obj, &self.theta, self.memory.clone(), &self.cfg.lbfgs)?;
            self.adopt(result, &mut record);
            record.m_new = m;
            record.i_after = self.batch_sum(batch, &self.theta)? / m as f64;
        } else if decision.retrain {
            let seed = mix_seed(self.cfg.sampler.seed, t as u64);
            let set = subsample(self.reservoir.items(), batch.examples(), decision.sizes, seed)?;
            let result = self.retrain_on(&set, m)?;
            self.adopt(result, &mut record);
            record.m_old = decision.sizes.m_old;
            record.m_new = decision.sizes.m_new;
            let past = self.past_mean(&self.theta)?;
            let new_sum = self.batch_sum(batch, &self.theta)?;
            record.i_after = (self.past_count as f64 * past + new_sum) / (self.past_count + m) as f64;
        }

        self.history.push(record.i_after);
        self.reservoir.absorb(batch.examples());
        if self.cfg.past_eval == PastEval::Exact {
            self.past.push(batch.clone());
        }
        self.past_count += m;
        self.next_t += 1;
        record.seconds = started.elapsed().as_secs_f64();
        Ok(record)
    }

    fn adopt(&mut self, result: OptimizeResult, record: &mut BatchRecord) {
        record.retrained = true;
        record.grad_evals = result.grad_evals;
        self.grad_evals += result.grad_evals;
        self.retrains += 1;
        self.theta = result.theta;
        self.memory = result.memory;
    }

    /// Runs `k` independent subsample-and-retrain instances for `batch`, one per seed.
    ///
    /// The state itself is not modified. Each instance is evaluated on the
    /// part of the new batch it did not train on.
    pub fn parallel_samplings(&self, batch: &Batch, seeds: &[u64]) -> Result<DispersionReport> {
        if seeds.is_empty() {
            return Err(Error::InvalidInput("parallel_samplings needs at least one seed".into()));
        }
        let decision = self.evaluate_trigger(batch)?;
        let sizes = if self.history.is_empty() {
            SampleSizes {
                m_old: 0,
                m_new: batch.len().min(self.cfg.sampler.m_max),
            }
        } else {
            decision.sizes
        };
        let (kind, mode) = self.mode();
        let outcomes: Vec<Result<(ParameterVector, Option<f64>, usize)>> = seeds
            .par_iter()
            .map(|&seed| {
                let set = subsample(self.reservoir.items(), batch.examples(), sizes, seed)?;
                let result = self.retrain_on(&set, batch.len())?;
                let mut chosen = set.new_indices.iter().peekable();
                let held: Vec<&Example> = batch
                    .examples()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| {
                        if chosen.peek() == Some(&i) {
                            chosen.next();
                            false
                        } else {
                            true
                        }
                    })
                    .map(|(_, e)| e)
                    .collect();
                let err = if held.is_empty() {
                    None
                } else {
                    Some(mean_mismatch(&held, &result.theta, kind, mode)?)
                };
                Ok((result.theta, err, result.grad_evals))
            })
            .collect();
        let mut thetas = Vec::with_capacity(seeds.len());
        let mut holdout_errors = Vec::with_capacity(seeds.len());
        let mut grad_evals = 0;
        for o in outcomes {
            let (theta, err, evals) = o?;
            thetas.push(theta);
            holdout_errors.push(err);
            grad_evals += evals;
        }
        let dispersion = relative_dispersion(&thetas);
        Ok(DispersionReport {
            seeds: seeds.to_vec(),
            sizes,
            thetas,
            holdout_errors,
            dispersion,
            grad_evals,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DispersionReport {
    pub seeds: Vec<u64>,
    pub sizes: SampleSizes,
    pub thetas: Vec<ParameterVector>,
    pub holdout_errors: Vec<Option<f64>>,
    /// `max_{i,j} |theta_i - theta_j| / |mean theta|`.
    pub dispersion: f64,
    pub grad_evals: usize,
}

/// Largest pairwise distance between parameter vectors relative to the norm of their mean.
pub fn relative_dispersion(thetas: &[ParameterVector]) -> f64 {
    let Some(first) = thetas.first() else {
        return 0.0;
    };
    let n = first.dim();
    let mut mean = vec![0.0; n];
    for th in thetas {
        for (m, v) in mean.iter_mut().zip(th.iter()) {
            *m += v;
        }
    }
    let k = thetas.len() as f64;
    let mean_norm = mean.iter().map(|m| (m / k).powi(2)).sum::<f64>().sqrt();
    let mut widest: f64 = 0.0;
    for (i, a) in thetas.iter().enumerate() {
        for b in &thetas[i + 1..] {
            let d = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            widest = widest.max(d);
        }
    }
    if widest == 0.0 {
        0.0
    } else {
        widest / mean_norm
    }
}

/// Folds [`DriverState::process_batch`] over the stream.
pub fn run_stream(stream: &Stream, cfg: DriverConfig) -> Result<(DriverState, Vec<BatchRecord>)> {
    let mut state = DriverState::new(stream.dim(), cfg)?;
    let mut trace = Vec::with_capacity(stream.len());
    for batch in stream.batches() {
        trace.push(state.process_batch(batch)?);
    }
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, RegKind, SparseVector};
    use approx::assert_relative_eq;

    fn ex(entries: &[(u32, f64)], y: u8) -> Example {
        Example::new(SparseVector::new(entries.to_vec()).unwrap(), Label::from_u8(y).unwrap())
    }

    fn history(values: &[f64]) -> MismatchHistory {
        let mut h = MismatchHistory::new();
        for &v in values {
            h.push(v);
        }
        h
    }

    #[test]
    fn mismatch_examples() {
        let batch = Batch::new(0, vec![ex(&[(0, 1.0)], 1), ex(&[(1, 1.0)], 0), ex(&[(0, 1.0), (1, 1.0)], 1)]).unwrap();
        let batches = [batch];
        let squared = LossKind::Squared;
        // theta reproduces labels exactly
        let perfect = [1.0, 0.0];
        assert_eq!(mismatch(&batches, &perfect, squared, MismatchMode::Absolute).unwrap(), 0.0);
        assert_eq!(mismatch(&batches, &perfect, squared, MismatchMode::Thresholded).unwrap(), 0.0);

        let ones = [Batch::new(0, vec![ex(&[(0, 1.0)], 1), ex(&[(1, 2.0)], 1)]).unwrap()];
        assert_eq!(mismatch(&ones, &[0.0, 0.0], squared, MismatchMode::Absolute).unwrap(), 1.0);

        // hand evaluation: predictions 0.5, -0.25, 0.25 against labels 1, 0, 1
        let theta = [0.5, -0.25];
        let expected = (0.5 + 0.25 + 0.75) / 3.0;
        assert_relative_eq!(
            mismatch(&batches, &theta, squared, MismatchMode::Absolute).unwrap(),
            expected,
            epsilon = 1e-15
        );
        assert!(matches!(mismatch(&[], &theta, squared, MismatchMode::Absolute), Err(Error::Empty(_))));
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&history(&[0.3, 0.3, 0.3, 0.3])).unwrap(), 0.0);
        assert_eq!(sigma(&history(&[0.0, 1.0])).unwrap(), 0.5);
        assert_eq!(sigma(&history(&[0.7])).unwrap(), 0.0);
        assert!(sigma(&MismatchHistory::new()).is_err());
    }

    #[test]
    fn trigger_examples() {
        assert!(!should_retrain(0.2, 0.2, 0.01));
        assert!(should_retrain(0.25, 0.2, 0.01));
        assert!(!should_retrain(0.5, 0.25, 0.25));
    }

    #[test]
    fn sample_size_examples() {
        let cfg = SamplerConfig {
            m_max: 1_000_000,
            m_old_min: 100,
            reservoir_capacity: 1_000_000,
            seed: 0,
        };
        let s = choose_sample_sizes(1.0, 0.01, 100_000, 1_000_000, &cfg);
        assert_eq!(s, SampleSizes { m_old: 1000, m_new: 100_000 });
        let s = choose_sample_sizes(0.3, 0.0, 100_000, 1_000_000, &cfg);
        assert_eq!(s.m_old, 100);
        let capped = SamplerConfig { m_max: 1000, ..cfg };
        assert_eq!(choose_sample_sizes(0.3, 0.1, 500, 10_000, &capped).m_new, 500);
        assert_eq!(choose_sample_sizes(0.3, 0.1, 5000, 10_000, &capped).m_new, 1000);
        // occupancy bounds m_old
        assert_eq!(choose_sample_sizes(0.3, 0.29, 5000, 40, &capped).m_old, 40);
    }

    #[test]
    fn subsample_examples() {
        let old: Vec<Example> = (0..10).map(|i| ex(&[(0, i as f64 + 1.0)], 0)).collect();
        let new: Vec<Example> = (0..6).map(|i| ex(&[(1, i as f64 + 1.0)], 1)).collect();
        let all = subsample(&old, &new, SampleSizes { m_old: 10, m_new: 6 }, 1).unwrap();
        assert_eq!(all.len(), 16);
        assert!(all.iter().take(10).all(|e| e.label == Label::ZERO));
        let a = subsample(&old, &new, SampleSizes { m_old: 3, m_new: 2 }, 42).unwrap();
        let b = subsample(&old, &new, SampleSizes { m_old: 3, m_new: 2 }, 42).unwrap();
        assert_eq!(a.iter().collect::<Vec<_>>(), b.iter().collect::<Vec<_>>());
        assert!(matches!(
            subsample(&old, &new, SampleSizes { m_old: 11, m_new: 1 }, 0),
            Err(Error::SampleSize { requested: 11, available: 10 })
        ));
    }

    #[test]
    fn subsample_frequency_is_uniform() {
        let pool: Vec<Example> = (0..10).map(|i| ex(&[(0, i as f64 + 1.0)], 0)).collect();
        let mut counts = [0usize; 10];
        for seed in 0..2000u64 {
            let set = subsample(&pool, &[], SampleSizes { m_old: 1, m_new: 0 }, mix_seed(7, seed)).unwrap();
            let v = set.old[0].features.entries()[0].1;
            counts[v as usize - 1] += 1;
        }
        for c in counts {
            assert!((140..=260).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn reservoir_respects_capacity() {
        let mut r = Reservoir::new(5, 3);
        let items: Vec<Example> = (0..50).map(|i| ex(&[(0, i as f64 + 1.0)], 0)).collect();
        r.absorb(&items);
        assert_eq!(r.len(), 5);
        assert_eq!(r.seen(), 50);
        let mut r = Reservoir::new(0, 3);
        r.absorb(&items);
        assert!(r.is_empty());
    }

    #[test]
    fn sequencing_is_enforced() {
        let cfg = DriverConfig::new(CostConfig::new(LossKind::Logistic, RegKind::L2, 1.0).unwrap());
        let mut state = DriverState::new(2, cfg).unwrap();
        let b = Batch::new(1, vec![ex(&[(0, 1.0)], 1)]).unwrap();
        assert!(matches!(state.process_batch(&b), Err(Error::Sequencing { expected: 0, got: 1 })));
    }

    #[test]
    fn dispersion_helper() {
        let a = ParameterVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(relative_dispersion(std::slice::from_ref(&a)), 0.0);
        assert_eq!(relative_dispersion(&[a.clone(), a.clone()]), 0.0);
        let b = ParameterVector::new(vec![1.0, 0.2]).unwrap();
        let d = relative_dispersion(&[a, b]);
        assert_relative_eq!(d, 0.2 / (1.0f64 + 0.01).sqrt(), epsilon = 1e-12);
    }
}
