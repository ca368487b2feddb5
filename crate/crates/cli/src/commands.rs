use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use salbfgs_core::driver::mix_seed;
use salbfgs_core::ingest::{
    generate_drift_stream, list_batch_files, read_batch_dir, read_examples, DriftEvent, DriftSpec, HashConfig,
};
use salbfgs_core::least_squares::LsSolution;
use salbfgs_core::{
    auc, error_rate, fit_error, minimize, predict, Batch, BatchRecord, CostConfig, CurvatureMemory, DenseBatch,
    DriverConfig, DriverState, Error, Example, ExampleObjective, ForgetWeight, ForgettingState, LbfgsConfig,
    LossKind, MismatchMode, ParameterVector, PastEval, RegKind, Result, SamplerConfig, ScoredSet,
};

use crate::model_file::{read_model, write_model, ModelFile};
use crate::output::{write_lines, AtomicFile};
use crate::{
    Command, CostArgs, DataArgs, EvalArgs, Failure, LossArg, LsArgs, MismatchArg, OptimizerArgs, PastEvalArg,
    StreamArgs, SynthArgs, TrainArgs,
};

type Outcome = std::result::Result<(), Failure>;

/// Largest dimension `ls-stream` will densify.
const MAX_DENSE_DIM: usize = 10_000;

pub fn dispatch(cmd: &Command) -> Outcome {
    match cmd {
        Command::Train(a) => train(a),
        Command::Stream(a) => stream(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::LsStream(a) => ls_stream(a),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn loss_kind(l: LossArg) -> LossKind {
    match l {
        LossArg::Logistic => LossKind::Logistic,
        LossArg::Squared => LossKind::Squared,
    }
}

fn cost_config(a: &CostArgs) -> Result<CostConfig> {
    CostConfig::new(loss_kind(a.loss), RegKind::L2, a.l2)
}

fn lbfgs_config(a: &OptimizerArgs) -> std::result::Result<LbfgsConfig, Failure> {
    if a.memory == 0 {
        return Err(usage("--memory must be at least 1"));
    }
    let cfg = LbfgsConfig {
        max_iterations: a.max_iters,
        grad_tolerance: a.grad_tol,
        ..LbfgsConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn hash_config(bits: Option<u8>, cross: &[String]) -> std::result::Result<Option<HashConfig>, Failure> {
    let Some(bits) = bits else {
        if !cross.is_empty() {
            return Err(usage("--cross requires --hash-bits"));
        }
        return Ok(None);
    };
    let mut pairs = Vec::with_capacity(cross.len());
    for c in cross {
        let (a, b) = c
            .split_once(':')
            .ok_or_else(|| usage(format!("--cross expects A:B, got {c:?}")))?;
        pairs.push((a.to_string(), b.to_string()));
    }
    HashConfig::new(bits, pairs)
        .map(Some)
        .map_err(|e| usage(e.to_string()))
}

fn resolve_dim(data: &DataArgs, hash: Option<&HashConfig>, batches: &[Batch]) -> std::result::Result<usize, Failure> {
    match (hash, data.dim) {
        (Some(h), Some(d)) if h.dim() != d => Err(usage(format!(
            "--dim {d} contradicts --hash-bits {} (dimension {})",
            h.bits(),
            h.dim()
        ))),
        (Some(h), _) => Ok(h.dim()),
        (None, Some(0)) => Err(usage("--dim must be positive")),
        (None, Some(d)) => Ok(d),
        (None, None) => Ok(batches.iter().map(Batch::min_dim).max().unwrap_or(0).max(1)),
    }
}

fn seconds_since(start: Instant, no_timing: bool) -> f64 {
    if no_timing {
        0.0
    } else {
        start.elapsed().as_secs_f64()
    }
}

/// Prints the summary object and, if requested, stores it as the last line of `path`.
fn emit_summary(path: Option<&Path>, summary: Value) -> Result<()> {
    let line = summary.to_string();
    println!("{line}");
    if let Some(p) = path {
        write_lines(p, &[line])?;
    }
    Ok(())
}

/// Line sink that is either an atomically committed file or stdout.
enum Sink {
    File(AtomicFile),
    Stdout,
}

impl Sink {
    fn open(path: Option<&Path>) -> Result<Self> {
        Ok(match path {
            Some(p) => Sink::File(AtomicFile::create(p)?),
            None => Sink::Stdout,
        })
    }

    fn line(&mut self, text: &str) -> Result<()> {
        match self {
            Sink::File(f) => f.line(text),
            Sink::Stdout => {
                let mut out = std::io::stdout().lock();
                let _ = writeln!(out, "{text}");
                let _ = out.flush();
                Ok(())
            }
        }
    }

    fn commit(self) -> Result<()> {
        match self {
            Sink::File(f) => f.commit(),
            Sink::Stdout => Ok(()),
        }
    }
}

pub fn trace_line(r: &BatchRecord, no_timing: bool) -> String {
    format!(
        "t={} i_before={} i_after={} retrained={} m_old={} m_new={} grad_evals={} seconds={}",
        r.t,
        r.i_before,
        r.i_after,
        r.retrained,
        r.m_old,
        r.m_new,
        r.grad_evals,
        if no_timing { 0.0 } else { r.seconds }
    )
}

fn train(a: &TrainArgs) -> Outcome {
    let cost = cost_config(&a.cost)?;
    let lbfgs = lbfgs_config(&a.opt)?;
    let hash = hash_config(a.data.hash_bits, &a.data.cross)?;
    let mut batches = read_batch_dir(&a.data.batch_dir, hash.as_ref())?;
    if let Some(t) = a.last_batch {
        if t >= batches.len() {
            return Err(usage(format!(
                "--last-batch {t} but {} holds only {} batches",
                a.data.batch_dir.display(),
                batches.len()
            )));
        }
        batches.truncate(t + 1);
    }
    let dim = resolve_dim(&a.data, hash.as_ref(), &batches)?;

    let started = Instant::now();
    let obj = ExampleObjective::from_batches(dim, &batches, cost)?;
    let result = minimize(&obj, &ParameterVector::zeros(dim), CurvatureMemory::new(a.opt.memory), &lbfgs)?;
    let seconds = seconds_since(started, a.no_timing);

    write_model(
        &a.model_out,
        &ModelFile {
            theta: result.theta.clone(),
            bits: hash.as_ref().map_or(0, HashConfig::bits),
        },
    )?;
    emit_summary(
        a.summary_out.as_deref(),
        json!({
            "command": "train",
            "batches": batches.len(),
            "examples": obj.len(),
            "dim": dim,
            "iterations": result.iterations,
            "grad_evals": result.grad_evals,
            "cost_evals": result.cost_evals,
            "final_cost": result.final_cost,
            "final_grad_norm": result.final_grad_norm,
            "converged": result.converged,
            "status": format!("{:?}", result.status),
            "seconds": seconds,
        }),
    )?;
    Ok(())
}

fn stream(a: &StreamArgs) -> Outcome {
    let cfg = DriverConfig {
        cost: cost_config(&a.cost)?,
        lbfgs: lbfgs_config(&a.opt)?,
        memory_capacity: a.opt.memory,
        sampler: SamplerConfig {
            m_max: a.m_max,
            m_old_min: a.m_old_min,
            reservoir_capacity: a.reservoir,
            seed: a.seed,
        },
        mismatch_mode: match a.mismatch_mode {
            MismatchArg::Absolute => MismatchMode::Absolute,
            MismatchArg::Thresholded => MismatchMode::Thresholded,
        },
        past_eval: match a.past_eval {
            PastEvalArg::Reservoir => PastEval::Reservoir,
            PastEvalArg::Exact => PastEval::Exact,
        },
        reset_memory: a.reset_memory,
        reweight: a.reweight,
        ..DriverConfig::new(CostConfig::logistic_l2(0.0))
    };
    cfg.validate()?;
    if a.parallel_samplings == Some(0) {
        return Err(usage("--parallel-samplings must be at least 1"));
    }
    let hash = hash_config(a.data.hash_bits, &a.data.cross)?;
    let batches = read_batch_dir(&a.data.batch_dir, hash.as_ref())?;
    let dim = resolve_dim(&a.data, hash.as_ref(), &batches)?;

    let started = Instant::now();
    let mut state = DriverState::new(dim, cfg)?;
    let mut trace = Sink::open(a.trace_out.as_deref())?;
    let mut samplings = Vec::new();
    let mut examples = 0;
    for batch in &batches {
        if let Some(k) = a.parallel_samplings {
            if state.evaluate_trigger(batch)?.retrain {
                let base = mix_seed(a.seed, batch.time_index as u64);
                let seeds: Vec<u64> = (0..k as u64).map(|j| mix_seed(base, j + 1)).collect();
                let report = state.parallel_samplings(batch, &seeds)?;
                samplings.push(json!({
                    "t": batch.time_index,
                    "m_old": report.sizes.m_old,
                    "m_new": report.sizes.m_new,
                    "dispersion": report.dispersion,
                    "holdout_errors": report.holdout_errors,
                    "grad_evals": report.grad_evals,
                }));
            }
        }
        let record = state.process_batch(batch)?;
        examples += batch.len();
        trace.line(&trace_line(&record, a.no_timing))?;
    }
    let seconds = seconds_since(started, a.no_timing);

    write_model(
        &a.model_out,
        &ModelFile {
            theta: state.theta().clone(),
            bits: hash.as_ref().map_or(0, HashConfig::bits),
        },
    )?;
    trace.commit()?;
    let mut summary = json!({
        "command": "stream",
        "batches": batches.len(),
        "examples": examples,
        "dim": dim,
        "retrains": state.retrains(),
        "grad_evals": state.grad_evals(),
        "final_mismatch": state.history().last(),
        "seconds": seconds,
    });
    if a.parallel_samplings.is_some() {
        summary["samplings"] = Value::Array(samplings);
    }
    emit_summary(a.summary_out.as_deref(), summary)?;
    Ok(())
}

fn eval(a: &EvalArgs) -> Outcome {
    let model = read_model(&a.model_in)?;
    let bits = a.hash_bits.or((model.bits > 0).then_some(model.bits));
    let hash = hash_config(bits, &a.cross)?;
    if let Some(h) = &hash {
        if h.dim() != model.theta.dim() {
            return Err(usage(format!(
                "hash dimension {} does not match model dimension {}",
                h.dim(),
                model.theta.dim()
            )));
        }
    }
    let examples: Vec<Example> = match (&a.data, &a.batch_dir) {
        (Some(path), _) => read_examples(path, hash.as_ref())?,
        (None, Some(dir)) => read_batch_dir(dir, hash.as_ref())?
            .into_iter()
            .flat_map(Batch::into_examples)
            .collect(),
        (None, None) => return Err(usage("one of --data or --batch-dir is required")),
    };
    if examples.is_empty() {
        let path = a.data.clone().unwrap_or_default();
        return Err(Error::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, "no examples to evaluate"),
        }
        .into());
    }
    let n = examples.len();
    let batch = Batch::new(0, examples)?;
    let cost = CostConfig::new(loss_kind(a.loss), RegKind::L2, 0.0)?;
    let theta = model.theta.as_slice();
    let batches = std::slice::from_ref(&batch);
    let absolute = error_rate(theta, batches, &cost, MismatchMode::Absolute)?;
    let thresholded = error_rate(theta, batches, &cost, MismatchMode::Thresholded)?;
    let scored = batch
        .examples()
        .iter()
        .map(|e| Ok((predict(theta, &e.features)?, e.label)))
        .collect::<Result<Vec<_>>>()?;
    let area = auc(&ScoredSet::new(scored)?)?;
    emit_summary(
        a.summary_out.as_deref(),
        json!({
            "command": "eval",
            "examples": n,
            "auc": area,
            "error_absolute": absolute,
            "error_thresholded": thresholded,
        }),
    )?;
    Ok(())
}

fn parse_drift(text: &str) -> std::result::Result<DriftEvent, Failure> {
    let bad = || usage(format!("--drift expects T:FRACTION, got {text:?}"));
    let (t, m) = text.split_once(':').ok_or_else(bad)?;
    Ok(DriftEvent {
        time: t.parse().map_err(|_| bad())?,
        magnitude: m.parse().map_err(|_| bad())?,
    })
}

fn synth(a: &SynthArgs) -> Outcome {
    let spec = DriftSpec {
        dim: a.dim,
        batches: a.batches,
        batch_size: a.batch_size,
        drifts: a.drifts.iter().map(|d| parse_drift(d)).collect::<std::result::Result<_, _>>()?,
        sparsity: a.sparsity,
        weight_scale: a.weight_scale,
        seed: a.seed,
    };
    spec.validate()?;
    match list_batch_files(&a.batch_dir) {
        Err(Error::Io { .. }) => {}
        _ => {
            return Err(Error::Io {
                path: a.batch_dir.clone(),
                source: std::io::Error::new(std::io::ErrorKind::AlreadyExists, "directory already holds batch files"),
            }
            .into())
        }
    }
    let stream = generate_drift_stream(&spec)?;
    salbfgs_core::ingest::write_batch_dir(&a.batch_dir, stream.batches())?;
    emit_summary(
        None,
        json!({
            "command": "synth",
            "batches": stream.len(),
            "examples": stream.example_count(),
            "dim": stream.dim(),
        }),
    )?;
    Ok(())
}

fn join_theta(theta: &[f64]) -> String {
    theta.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn ls_stream(a: &LsArgs) -> Outcome {
    let weight = ForgetWeight::new(a.mu)?;
    let hash = hash_config(a.data.hash_bits, &a.data.cross)?;
    if let Some(h) = &hash {
        if h.dim() > MAX_DENSE_DIM {
            return Err(usage(format!("dimension {} exceeds the dense limit {MAX_DENSE_DIM}", h.dim())));
        }
    }
    if a.data.dim.is_some_and(|d| d > MAX_DENSE_DIM) {
        return Err(usage(format!("--dim exceeds the dense limit {MAX_DENSE_DIM}")));
    }
    let batches = read_batch_dir(&a.data.batch_dir, hash.as_ref())?;
    let dim = resolve_dim(&a.data, hash.as_ref(), &batches)?;
    if dim > MAX_DENSE_DIM {
        return Err(usage(format!("dimension {dim} exceeds the dense limit {MAX_DENSE_DIM}")));
    }
    let dense = batches
        .iter()
        .map(|b| DenseBatch::from_batch(b, dim))
        .collect::<Result<Vec<_>>>()?;

    let mut trace = Sink::open(a.trace_out.as_deref())?;
    let mut state = ForgettingState::init_state(&dense[0])?;
    let mut last: Option<(LsSolution, f64)> = None;
    let mut jittered = false;
    for t in 0..dense.len() {
        if t > 0 {
            state.update_state(&dense[t], weight)?;
        }
        let sol = state.solve_theta(a.ridge)?;
        let fit = fit_error(&sol.theta, &dense[..=t])?;
        jittered |= sol.jitter.is_some();
        let jitter = sol.jitter.map_or_else(|| "none".to_string(), |j| j.to_string());
        trace.line(&format!(
            "t={t} fit_error={fit} jitter={jitter} theta={}",
            join_theta(&sol.theta)
        ))?;
        last = Some((sol, fit));
    }
    let (sol, fit) = last.expect("batch directories are never empty");
    if let Some(p) = &a.model_out {
        write_model(
            p,
            &ModelFile {
                theta: sol.theta.clone(),
                bits: hash.as_ref().map_or(0, HashConfig::bits),
            },
        )?;
    }
    trace.commit()?;
    emit_summary(
        a.summary_out.as_deref(),
        json!({
            "command": "ls-stream",
            "batches": dense.len(),
            "dim": dim,
            "mu": weight.mu(),
            "lambda": weight.lambda(),
            "ridge": a.ridge,
            "jitter_applied": jittered,
            "final_fit_error": fit,
        }),
    )?;
    Ok(())
}
