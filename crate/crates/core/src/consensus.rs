//! Synchronous averaging rounds and the logarithmic step schedule.
//!
//! One consensus step replaces every node's vector with the weighted average
//! of its closed neighborhood; `t` steps apply `W^t` to the stacked values and
//! leave the network mean untouched. The [`ConsensusSchedule`] picks the number
//! of steps for outer round `r` so that the per-round averaging error decays
//! like `1/r^{1+ζ}`, which keeps the total communication near-linear in the
//! round count while the accumulated error stays summable.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::WeightMatrix;

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("expected {expected} node vectors, got {got}")]
    NodeCountMismatch { expected: usize, got: usize },
    #[error("node {node} holds a vector of length {got}, expected {expected}")]
    ShapeMismatch { node: usize, expected: usize, got: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

/// Parameters of the per-round step count
/// `t_r = max(t_min, ceil((1+ζ)·log r / log(1/ρ) + log c / log(1/ρ)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusSchedule {
    zeta: f64,
    rho: f64,
    c: f64,
    t_min: usize,
}

impl ConsensusSchedule {
    pub fn new(zeta: f64, rho: f64, c: f64, t_min: usize) -> Result<Self, ConsensusError> {
        if !(zeta > 0.0) {
            return Err(ConsensusError::InvalidSchedule(format!(
                "zeta must be positive, got {zeta}"
            )));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(ConsensusError::InvalidSchedule(format!(
                "rho must lie in (0, 1), got {rho}"
            )));
        }
        if !(c > 0.0) {
            return Err(ConsensusError::InvalidSchedule(format!(
                "prefactor c must be positive, got {c}"
            )));
        }
        if t_min == 0 {
            return Err(ConsensusError::InvalidSchedule(
                "t_min must be at least 1".into(),
            ));
        }
        Ok(ConsensusSchedule { zeta, rho, c, t_min })
    }

    /// Schedule driven by the contraction constants of a mixing matrix.
    pub fn from_weights(
        zeta: f64,
        weights: &WeightMatrix,
        t_min: usize,
    ) -> Result<Self, ConsensusError> {
        Self::new(zeta, weights.rho(), weights.prefactor(), t_min)
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn prefactor(&self) -> f64 {
        self.c
    }

    pub fn t_min(&self) -> usize {
        self.t_min
    }

    /// Number of averaging steps for outer round `r` (nondecreasing in `r`).
    ///
    /// Rounds 0 and 1 contribute no log term; natural logarithms are used,
    /// the ratio makes the formula base-invariant.
    pub fn steps_for_round(&self, round: usize) -> usize {
        let log_inv_rho = (1.0 / self.rho).ln();
        let raw = (1.0 + self.zeta) * (round.max(1) as f64).ln() / log_inv_rho
            + self.c.ln() / log_inv_rho;
        let ceiled = raw.ceil();
        let steps = if ceiled.is_finite() && ceiled > 0.0 {
            ceiled as usize
        } else {
            0
        };
        steps.max(self.t_min)
    }

    /// Upper bound `c·ρ^t·spread` on any node's distance to the true mean
    /// after `t` steps, where `spread` is the norm of the stacked deviation
    /// of the inputs from their mean.
    pub fn deviation_bound(&self, steps: usize, spread: f64) -> f64 {
        debug_assert!(spread >= 0.0);
        self.c * self.rho.powf(steps as f64) * spread
    }
}

/// Output of an averaging pass.
#[derive(Debug, Clone)]
pub struct ConsensusResult {
    /// One estimate per node, each of the input dimension.
    pub estimates: Vec<DVector<f64>>,
    pub steps_taken: usize,
    /// Worst-case distance to the true mean; only populated by
    /// [`consensus_steps_oracle`], which is meant for tests and diagnostics
    /// (real nodes cannot see the network mean).
    pub max_deviation: Option<f64>,
}

/// Runs `t` synchronous averaging steps on one vector per node.
///
/// Equivalent to applying `W^t` to the stacked values, coordinate by
/// coordinate, and evaluated in plain left-to-right order so results are
/// reproducible bit for bit.
pub fn consensus_steps(
    weights: &WeightMatrix,
    values: &[DVector<f64>],
    steps: usize,
) -> Result<ConsensusResult, ConsensusError> {
    let mut stacked = stack_values(weights.n(), values)?;
    mix_in_place(weights, &mut stacked, steps);
    Ok(ConsensusResult {
        estimates: unstack_values(&stacked),
        steps_taken: steps,
        max_deviation: None,
    })
}

/// Same as [`consensus_steps`] but also reports the worst node's distance to
/// the true mean of the inputs.
pub fn consensus_steps_oracle(
    weights: &WeightMatrix,
    values: &[DVector<f64>],
    steps: usize,
) -> Result<ConsensusResult, ConsensusError> {
    let mut result = consensus_steps(weights, values, steps)?;
    let n = values.len() as f64;
    let mut mean = DVector::zeros(values[0].len());
    for v in values {
        mean += v;
    }
    mean /= n;
    let deviation = result
        .estimates
        .iter()
        .map(|e| (e - &mean).norm())
        .fold(0.0f64, f64::max);
    result.max_deviation = Some(deviation);
    Ok(result)
}

/// Stacks per-node vectors into an `n × p` matrix (row `i` = node `i`),
/// validating counts and a uniform dimension.
pub(crate) fn stack_values(
    n: usize,
    values: &[DVector<f64>],
) -> Result<DMatrix<f64>, ConsensusError> {
    if values.len() != n {
        return Err(ConsensusError::NodeCountMismatch {
            expected: n,
            got: values.len(),
        });
    }
    let p = values[0].len();
    for (node, v) in values.iter().enumerate() {
        if v.len() != p {
            return Err(ConsensusError::ShapeMismatch {
                node,
                expected: p,
                got: v.len(),
            });
        }
    }
    let mut stacked = DMatrix::zeros(n, p);
    for (i, v) in values.iter().enumerate() {
        for k in 0..p {
            stacked[(i, k)] = v[k];
        }
    }
    Ok(stacked)
}

pub(crate) fn unstack_values(stacked: &DMatrix<f64>) -> Vec<DVector<f64>> {
    (0..stacked.nrows())
        .map(|i| DVector::from_iterator(stacked.ncols(), stacked.row(i).iter().copied()))
        .collect()
}

/// Applies `steps` multiplications by `W` to the row-stacked values.
///
/// The accumulation runs over neighbors in ascending index order for every
/// (node, coordinate) pair; callers relying on exact reproducibility (and the
/// exact-consensus equivalence between drivers) depend on that order.
pub(crate) fn mix_in_place(weights: &WeightMatrix, stacked: &mut DMatrix<f64>, steps: usize) {
    let w = weights.matrix();
    let (n, p) = (stacked.nrows(), stacked.ncols());
    let mut next = DMatrix::<f64>::zeros(n, p);
    for _ in 0..steps {
        next.fill(0.0);
        for i in 0..n {
            for j in 0..n {
                let wij = w[(i, j)];
                if wij == 0.0 {
                    continue;
                }
                for k in 0..p {
                    next[(i, k)] += wij * stacked[(j, k)];
                }
            }
        }
        std::mem::swap(stacked, &mut next);
    }
}
