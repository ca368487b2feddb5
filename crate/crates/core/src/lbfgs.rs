//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! The curvature memory is a first-class value: [`minimize`] takes one in and
//! hands the updated one back, so a later call on a related objective can
//! start from the previous inverse-Hessian approximation.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::ParameterVector;

/// A smooth function that returns its value and writes its gradient.
pub trait Objective {
    fn dim(&self) -> usize;
    fn evaluate(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Adapts a closure `f(theta, grad) -> cost` to [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        Ok((self.f)(theta, grad))
    }
}

/// Pairs whose curvature `y.s` falls below this fraction of `|s||y|` are skipped.
pub const CURVATURE_SKIP_REL: f64 = 1e-12;

/// Relative band in which two cost values are treated as equal.
const FLAT_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

impl CurvaturePair {
    /// Returns `None` unless `y.s > 0`.
    pub fn new(s: Vec<f64>, y: Vec<f64>) -> Option<Self> {
        let ys = dot(&s, &y);
        (ys > 0.0 && ys.is_finite()).then(|| Self { rho: 1.0 / ys, s, y })
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn curvature(&self) -> f64 {
        1.0 / self.rho
    }
}

/// Ring buffer of curvature pairs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMemory {
    pairs: VecDeque<CurvaturePair>,
    capacity: usize,
    gamma: f64,
}

impl CurvatureMemory {
    pub const DEFAULT_CAPACITY: usize = 10;

    pub fn new(capacity: usize) -> Self {
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            gamma: 1.0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pairs(&self) -> impl Iterator<Item = &CurvaturePair> {
        self.pairs.iter()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
        self.gamma = 1.0;
    }

    /// Stores `(s, y)` if its curvature passes the skip test. Returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let ys = dot(&s, &y);
        let yy = dot(&y, &y);
        let threshold = CURVATURE_SKIP_REL * dot(&s, &s).sqrt() * yy.sqrt();
        if !(ys > threshold) || !ys.is_finite() || yy == 0.0 {
            return false;
        }
        let Some(pair) = CurvaturePair::new(s, y) else {
            return false;
        };
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.gamma = ys / yy;
        self.pairs.push_back(pair);
        true
    }

    fn dim(&self) -> Option<usize> {
        self.pairs.front().map(|p| p.s.len())
    }
}

impl Default for CurvatureMemory {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub max_iterations: usize,
    /// Stop once `|g|_inf` drops to this value.
    pub grad_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            grad_tolerance: 1e-6,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_steps: 20,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.grad_tolerance > 0.0 && self.grad_tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "grad_tolerance must be positive, got {}",
                self.grad_tolerance
            )));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "wolfe_c1 must lie in (0, 0.5), got {}",
                self.wolfe_c1
            )));
        }
        if !(self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "wolfe_c2 must lie in (c1, 1), got {}",
                self.wolfe_c2
            )));
        }
        if self.max_line_search_steps == 0 {
            return Err(Error::InvalidConfig(
                "max_line_search_steps must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub theta: ParameterVector,
    pub memory: CurvatureMemory,
    pub iterations: usize,
    pub final_cost: f64,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub status: OptimizeStatus,
    pub cost_evals: usize,
    pub grad_evals: usize,
    /// Cost at the start and after every accepted iteration.
    pub cost_trace: Vec<f64>,
}

/// Two-loop recursion: returns `d = -H g` for the memory's inverse-Hessian estimate.
pub fn two_loop_direction(grad: &[f64], memory: &CurvatureMemory) -> Result<Vec<f64>> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    if let Some(d) = memory.dim() {
        if d != grad.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: grad.len(),
            });
        }
    }
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for p in memory.pairs.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        axpy(-a, &p.y, &mut q);
        alphas.push(a);
    }
    for v in q.iter_mut() {
        *v *= memory.gamma;
    }
    for (p, a) in memory.pairs.iter().zip(alphas.into_iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        axpy(a - b, &p.s, &mut q);
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    Ok(q)
}

/// Accepted line-search step together with the function state at the new point.
#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub alpha: f64,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub grad: Vec<f64>,
    pub evals: usize,
}

#[derive(Clone)]
struct Trial {
    alpha: f64,
    cost: f64,
    dphi: f64,
    theta: Vec<f64>,
    grad: Vec<f64>,
}

struct Search<'a, O: ?Sized> {
    obj: &'a O,
    theta: &'a [f64],
    direction: &'a [f64],
    f0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    flat: f64,
    evals: usize,
}

impl<O: Objective + ?Sized> Search<'_, O> {
    fn eval(&mut self, alpha: f64) -> Result<Trial> {
        let theta: Vec<f64> = self
            .theta
            .iter()
            .zip(self.direction)
            .map(|(t, d)| t + alpha * d)
            .collect();
        let mut grad = vec![0.0; theta.len()];
        let cost = self.obj.evaluate(&theta, &mut grad)?;
        self.evals += 1;
        let dphi = dot(&grad, self.direction);
        Ok(Trial {
            alpha,
            cost,
            dphi,
            theta,
            grad,
        })
    }

    fn sufficient_decrease(&self, t: &Trial) -> bool {
        if !(t.cost.is_finite() && t.dphi.is_finite()) {
            return false;
        }
        if t.cost <= self.f0 + self.c1 * t.alpha * self.dphi0 {
            return true;
        }
        // Below the resolution of the cost, fall back to the derivative.
        (t.cost - self.f0).abs() <= self.flat && t.dphi <= (2.0 * self.c1 - 1.0) * self.dphi0
    }

    fn curvature_ok(&self, t: &Trial) -> bool {
        t.dphi.abs() <= -self.c2 * self.dphi0
    }
}

fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.cost - hi.cost) / (a - b);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    let mut x = if disc >= 0.0 && hi.cost.is_finite() {
        let d2 = disc.sqrt() * (b - a).signum();
        b - (b - a) * ((hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2))
    } else {
        f64::NAN
    };
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if !x.is_finite() || x < left + margin || x > right - margin {
        x = 0.5 * (a + b);
    }
    x
}

/// Strong Wolfe line search along `direction` from `theta`.
///
/// `cost` and `grad` describe `theta`; `alpha0` is the first trial step. On
/// exhaustion the best step with sufficient decrease is returned, and
/// [`Error::LineSearchFailed`] is raised only if none was found or the
/// direction cannot move `theta` at all.
#[allow(clippy::too_many_arguments)]
pub fn wolfe_line_search<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    cost: f64,
    grad: &[f64],
    direction: &[f64],
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Result<LineSearchStep> {
    let dphi0 = dot(grad, direction);
    let scale = theta.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let dmax = direction.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(dphi0 < 0.0) || !dphi0.is_finite() || alpha0 * dmax <= f64::EPSILON * scale {
        return Err(Error::LineSearchFailed { steps: 0 });
    }
    let mut s = Search {
        obj,
        theta,
        direction,
        f0: cost,
        dphi0,
        c1: cfg.wolfe_c1,
        c2: cfg.wolfe_c2,
        flat: FLAT_REL * cost.abs().max(1.0),
        evals: 0,
    };
    let origin = Trial {
        alpha: 0.0,
        cost,
        dphi: dphi0,
        theta: theta.to_vec(),
        grad: grad.to_vec(),
    };
    let max_steps = cfg.max_line_search_steps;
    let finish = |t: Trial, evals: usize| LineSearchStep {
        alpha: t.alpha,
        theta: t.theta,
        cost: t.cost,
        grad: t.grad,
        evals,
    };

    let mut prev = origin;
    let mut alpha = alpha0;
    let mut best: Option<Trial> = None;
    let mut bracket: Option<(Trial, Trial)> = None;
    while s.evals < max_steps {
        let t = s.eval(alpha)?;
        let decrease = s.sufficient_decrease(&t);
        if !decrease || (prev.alpha > 0.0 && t.cost >= prev.cost) {
            bracket = Some((prev, t));
            break;
        }
        if s.curvature_ok(&t) {
            let evals = s.evals;
            return Ok(finish(t, evals));
        }
        if t.dphi >= 0.0 {
            bracket = Some((t, prev));
            break;
        }
        best = Some(t.clone());
        prev = t;
        alpha *= 2.0;
    }

    if let Some((mut lo, mut hi)) = bracket {
        while s.evals < max_steps {
            if (hi.alpha - lo.alpha).abs() <= f64::EPSILON * lo.alpha.abs().max(1e-300) {
                break;
            }
            let a = interpolate(&lo, &hi);
            let t = s.eval(a)?;
            if !s.sufficient_decrease(&t) || t.cost >= lo.cost {
                hi = t;
                continue;
            }
            if s.curvature_ok(&t) {
                let evals = s.evals;
                return Ok(finish(t, evals));
            }
            if t.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
        if lo.alpha > 0.0 && best.as_ref().is_none_or(|b| lo.cost <= b.cost) {
            best = Some(lo);
        }
    }

    match best {
        Some(t) => {
            let evals = s.evals;
            Ok(finish(t, evals))
        }
        None => Err(Error::LineSearchFailed { steps: s.evals }),
    }
}

/// Armijo backtracking along steepest descent, used after a Wolfe failure.
fn steepest_descent_step<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    cost: f64,
    grad: &[f64],
    cfg: &LbfgsConfig,
) -> Result<LineSearchStep> {
    let gg = dot(grad, grad);
    let mut alpha = 1.0 / gg.sqrt().max(1.0);
    let mut evals = 0;
    for _ in 0..4 * cfg.max_line_search_steps {
        let x: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - alpha * g).collect();
        if x.as_slice() == theta {
            break;
        }
        let mut g = vec![0.0; x.len()];
        let f = obj.evaluate(&x, &mut g)?;
        evals += 1;
        if f.is_finite() && f < cost - cfg.wolfe_c1 * alpha * gg {
            return Ok(LineSearchStep {
                alpha,
                theta: x,
                cost: f,
                grad: g,
                evals,
            });
        }
        alpha *= 0.5;
    }
    Err(Error::LineSearchFailed { steps: evals })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Runs L-BFGS from `theta0`, warm-started with `memory0`.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    theta0: &ParameterVector,
    memory0: CurvatureMemory,
    cfg: &LbfgsConfig,
) -> Result<OptimizeResult> {
    cfg.validate()?;
    let n = obj.dim();
    if theta0.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: theta0.dim(),
        });
    }
    let mut memory = memory0;
    if memory.dim().is_some_and(|d| d != n) {
        memory.clear();
    }
    let mut theta = theta0.as_slice().to_vec();
    let mut grad = vec![0.0; n];
    let mut cost = obj.evaluate(&theta, &mut grad)?;
    let mut evals = 1;
    if !cost.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("cost or gradient at the initial point".into()));
    }
    let mut cost_trace = vec![cost];
    let mut iterations = 0;
    let status = loop {
        if inf_norm(&grad) <= cfg.grad_tolerance {
            break OptimizeStatus::Converged;
        }
        if iterations >= cfg.max_iterations {
            break OptimizeStatus::MaxIterations;
        }
        let mut direction = two_loop_direction(&grad, &memory)?;
        if !(dot(&grad, &direction) < 0.0) {
            memory.clear();
            direction = grad.iter().map(|g| -g).collect();
        }
        let alpha0 = if memory.is_empty() {
            (1.0 / dot(&grad, &grad).sqrt()).min(1.0)
        } else {
            1.0
        };
        let step = match wolfe_line_search(obj, &theta, cost, &grad, &direction, alpha0, cfg) {
            Ok(step) => step,
            Err(Error::LineSearchFailed { steps }) => {
                evals += steps;
                memory.clear();
                match steepest_descent_step(obj, &theta, cost, &grad, cfg) {
                    Ok(step) => step,
                    Err(Error::LineSearchFailed { steps }) => {
                        evals += steps;
                        break OptimizeStatus::LineSearchFailed;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        };
        evals += step.evals;
        if step.theta == theta {
            break OptimizeStatus::LineSearchFailed;
        }
        let s: Vec<f64> = step.theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        theta = step.theta;
        grad = step.grad;
        cost = step.cost;
        cost_trace.push(cost);
        iterations += 1;
    };
    Ok(OptimizeResult {
        theta: ParameterVector::from_vec_unchecked(theta),
        memory,
        iterations,
        final_cost: cost,
        final_grad_norm: inf_norm(&grad),
        converged: status == OptimizeStatus::Converged,
        status,
        cost_evals: evals,
        grad_evals: evals,
        cost_trace,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn half_square() -> FnObjective<impl Fn(&[f64], &mut [f64]) -> f64> {
        FnObjective::new(1, |x: &[f64], g: &mut [f64]| {
            g[0] = x[0];
            0.5 * x[0] * x[0]
        })
    }

    #[test]
    fn empty_memory_gives_scaled_steepest_descent() {
        let d = two_loop_direction(&[2.0, -1.0], &CurvatureMemory::default()).unwrap();
        assert_eq!(d, vec![-2.0, 1.0]);
        let d = two_loop_direction(&[0.0, 0.0], &CurvatureMemory::default()).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
        assert!(two_loop_direction(&[f64::NAN], &CurvatureMemory::default()).is_err());
    }

    #[test]
    fn single_exact_pair_reproduces_newton_on_span() {
        // A = [[4, 1], [1, 3]], s arbitrary, y = A s.
        let a = [[4.0, 1.0], [1.0, 3.0]];
        let s = vec![0.3, -0.7];
        let y: Vec<f64> = (0..2).map(|i| a[i][0] * s[0] + a[i][1] * s[1]).collect();
        let mut mem = CurvatureMemory::new(5);
        assert!(mem.push(s.clone(), y.clone()));
        // gradient along y: A^{-1} y = s, so the Newton direction is -s.
        let d = two_loop_direction(&y, &mem).unwrap();
        assert_relative_eq!(d[0], -s[0], epsilon = 1e-14);
        assert_relative_eq!(d[1], -s[1], epsilon = 1e-14);
    }

    #[test]
    fn memory_skips_nonpositive_curvature_and_evicts_oldest() {
        let mut mem = CurvatureMemory::new(2);
        assert!(!mem.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!mem.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert!(mem.is_empty());
        assert!(mem.push(vec![1.0, 0.0], vec![2.0, 0.0]));
        assert!(mem.push(vec![0.0, 1.0], vec![0.0, 4.0]));
        assert!(mem.push(vec![1.0, 1.0], vec![1.0, 1.0]));
        assert_eq!(mem.len(), 2);
        assert_eq!(mem.pairs().next().unwrap().s(), &[0.0, 1.0]);
        assert_relative_eq!(mem.gamma(), 1.0);
    }

    #[test]
    fn unit_step_accepted_at_exact_minimizer() {
        let obj = half_square();
        let cfg = LbfgsConfig::default();
        let step = wolfe_line_search(&obj, &[1.0], 0.5, &[1.0], &[-1.0], 1.0, &cfg).unwrap();
        assert_eq!(step.alpha, 1.0);
        assert_eq!(step.theta, vec![0.0]);
        assert_eq!(step.evals, 1);
    }

    #[test]
    fn negligible_direction_fails() {
        let obj = half_square();
        let cfg = LbfgsConfig::default();
        let r = wolfe_line_search(&obj, &[1.0], 0.5, &[1.0], &[-1e-16], 1.0, &cfg);
        assert!(matches!(r, Err(Error::LineSearchFailed { .. })));
        let r = wolfe_line_search(&obj, &[1.0], 0.5, &[1.0], &[1.0], 1.0, &cfg);
        assert!(matches!(r, Err(Error::LineSearchFailed { .. })));
    }

    #[test]
    fn shifted_quadratic_in_three_iterations() {
        let c = [3.0, -2.0, 0.5, 7.0];
        let obj = FnObjective::new(4, |x: &[f64], g: &mut [f64]| {
            let mut f = 0.0;
            for i in 0..4 {
                let r = x[i] - c[i];
                g[i] = 2.0 * r;
                f += r * r;
            }
            f
        });
        let cfg = LbfgsConfig {
            grad_tolerance: 1e-10,
            ..Default::default()
        };
        let r = minimize(&obj, &ParameterVector::zeros(4), CurvatureMemory::default(), &cfg).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 3, "took {} iterations", r.iterations);
        for i in 0..4 {
            assert!((r.theta[i] - c[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let obj = FnObjective::new(2, |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        });
        let cfg = LbfgsConfig {
            max_iterations: 500,
            grad_tolerance: 1e-9,
            ..Default::default()
        };
        let theta0 = ParameterVector::new(vec![-1.2, 1.0]).unwrap();
        let r = minimize(&obj, &theta0, CurvatureMemory::default(), &cfg).unwrap();
        assert!((r.theta[0] - 1.0).abs() < 1e-5 && (r.theta[1] - 1.0).abs() < 1e-5, "{:?}", r.theta);
    }

    #[test]
    fn warm_start_at_optimum_takes_no_iterations() {
        let obj = half_square();
        let theta = ParameterVector::new(vec![0.0]).unwrap();
        let mut mem = CurvatureMemory::default();
        mem.push(vec![1.0], vec![1.0]);
        let r = minimize(&obj, &theta, mem.clone(), &LbfgsConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.theta, theta);
        assert_eq!(r.memory, mem);
        assert!(r.converged);
    }

    #[test]
    fn non_finite_start_is_an_input_error() {
        let obj = FnObjective::new(1, |_: &[f64], g: &mut [f64]| {
            g[0] = 0.0;
            f64::INFINITY
        });
        let r = minimize(&obj, &ParameterVector::zeros(1), CurvatureMemory::default(), &LbfgsConfig::default());
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn config_validation() {
        let bad = LbfgsConfig {
            wolfe_c1: 0.95,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = LbfgsConfig {
            grad_tolerance: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
