//! Least squares over a batch stream with a forgetting factor.
//!
//! The state keeps `A ~ X^T X` and `B ~ X^T Y` for everything absorbed so far.
//! Each new batch is folded in as
//!
//! ```text
//! A <- 2 / (1 + mu^2) * (mu^2 A + X^T X)
//! B <- 2 / (1 + mu^2) * (mu^2 B + X^T Y)
//! ```
//!
//! and `theta = A^-1 B`. With `mu = 1` this is the exact cumulative normal
//! equation; with `mu = 0` only the newest batch survives.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Batch, ParameterVector};

/// Condition estimates above this make [`ForgettingState::solve_theta`] fail.
pub const MAX_CONDITION: f64 = 1e12;

/// A dense design matrix and target vector for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBatch {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl DenseBatch {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        Ok(Self { x, y })
    }

    /// Densifies a sparse batch; labels become the regression targets.
    pub fn from_batch(batch: &Batch, dim: usize) -> Result<Self> {
        let need = batch.min_dim();
        if need > dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: need,
            });
        }
        let mut x = DMatrix::zeros(batch.len(), dim);
        let mut y = DVector::zeros(batch.len());
        for (r, e) in batch.examples().iter().enumerate() {
            for &(i, v) in e.features.entries() {
                x[(r, i as usize)] = v;
            }
            y[r] = e.label.as_f64();
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// The forgetting factor `mu`; `lambda = mu^2 / (1 + mu^2)` is derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgetWeight {
    mu: f64,
}

impl ForgetWeight {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "forgetting factor mu must be finite and >= 0, got {mu}"
            )));
        }
        Ok(Self { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        let m2 = self.mu * self.mu;
        m2 / (1.0 + m2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingState {
    a: DMatrix<f64>,
    b: DVector<f64>,
    t: usize,
}

/// Solution of [`ForgettingState::solve_theta`], flagging whether jitter was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub theta: ParameterVector,
    pub jitter: Option<f64>,
}

impl ForgettingState {
    pub fn init_state(batch0: &DenseBatch) -> Result<Self> {
        if batch0.x.nrows() == 0 {
            return Err(Error::Empty("initial least-squares batch"));
        }
        let xt = batch0.x.transpose();
        Ok(Self {
            a: &xt * &batch0.x,
            b: &xt * &batch0.y,
            t: 0,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn update_state(&mut self, batch: &DenseBatch, w: ForgetWeight) -> Result<()> {
        if batch.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: batch.dim(),
            });
        }
        let m2 = w.mu() * w.mu();
        let scale = 2.0 / (1.0 + m2);
        let xt = batch.x.transpose();
        let xtx = &xt * &batch.x;
        let xty = &xt * &batch.y;
        self.a = (&self.a * m2 + xtx) * scale;
        self.b = (&self.b * m2 + xty) * scale;
        // keep A exactly symmetric
        let n = self.dim();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.a[(i, j)] + self.a[(j, i)]);
                self.a[(i, j)] = v;
                self.a[(j, i)] = v;
            }
        }
        self.t += 1;
        Ok(())
    }

    /// `theta = A^-1 B` via Cholesky.
    ///
    /// Fails with [`Error::Singular`] when the factorization breaks down or the
    /// condition estimate exceeds [`MAX_CONDITION`]. With `ridge`, the solve uses
    /// `A + eps I`, `eps = 1e-8 * trace(A) / l`, and skips the condition check.
    pub fn solve_theta(&self, ridge: bool) -> Result<LsSolution> {
        let n = self.dim();
        if ridge {
            let trace = self.a.trace();
            let eps = if trace > 0.0 {
                1e-8 * trace / n as f64
            } else {
                1e-8
            };
            let jittered = &self.a + DMatrix::identity(n, n) * eps;
            let chol = Cholesky::new(jittered).ok_or(Error::Singular {
                condition: f64::INFINITY,
            })?;
            let theta = chol.solve(&self.b);
            return Ok(LsSolution {
                theta: ParameterVector::new(theta.iter().copied().collect())?,
                jitter: Some(eps),
            });
        }
        let chol = Cholesky::new(self.a.clone()).ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        let condition = condition_estimate(&chol);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        let theta = chol.solve(&self.b);
        Ok(LsSolution {
            theta: ParameterVector::new(theta.iter().copied().collect())?,
            jitter: None,
        })
    }
}

/// `(max L_ii / min L_ii)^2` from the Cholesky factor, a lower bound on cond(A).
fn condition_estimate(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    let n = l.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..n {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        (hi / lo).powi(2)
    }
}

/// `sum_s |X_s theta - Y_s|^2`.
pub fn fit_error(theta: &[f64], batches: &[DenseBatch]) -> Result<f64> {
    let th = DVector::from_column_slice(theta);
    let mut total = 0.0;
    for b in batches {
        if b.dim() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: b.dim(),
            });
        }
        total += (&b.x * &th - &b.y).norm_squared();
    }
    Ok(total)
}
