//! Directed task affinity and the share sets that gate cross-task extractor
//! aggregation.
//!
//! `Theta[i][j]` measures how much adding task `i`'s extractor gradient to
//! task `j`'s own lowers task `j`'s validation loss. Its running average
//! `Upsilon` decides which tasks share: task `i` joins `S_j` while
//! `Upsilon[i][j] > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Denominator losses below this give `Theta = 0` and a flag.
pub const LOSS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityState {
    /// Last round's affinity, `theta[i][j]` for task `i` toward task `j`.
    pub theta: Vec<Vec<f64>>,
    /// Cumulative affinity, same indexing.
    pub upsilon: Vec<Vec<f64>>,
    /// EMA factor.
    pub ell: f64,
    /// `share_sets[m]`: tasks whose extractor gradients enter task `m`'s
    /// update, ascending, always containing `m`.
    pub share_sets: Vec<Vec<usize>>,
}

impl AffinityState {
    /// Zero affinity, so every task starts out sharing with nobody.
    pub fn new(tasks: usize, ell: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ell) {
            return Err(Error::Config(format!("ell must lie in [0, 1], got {ell}")));
        }
        Ok(AffinityState {
            theta: vec![vec![0.0; tasks]; tasks],
            upsilon: vec![vec![0.0; tasks]; tasks],
            ell,
            share_sets: (0..tasks).map(|m| vec![m]).collect(),
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.upsilon.len()
    }

    /// `Upsilon <- ell Upsilon + (1 - ell) Theta`, then
    /// `S_m = {m} + {i : Upsilon[i][m] > 0}`.
    pub fn update_share_sets(&mut self, theta: &[Vec<f64>]) -> Result<&[Vec<usize>]> {
        let m = self.num_tasks();
        if theta.len() != m || theta.iter().any(|r| r.len() != m || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Domain(format!("affinity must be a finite {m}x{m} matrix")));
        }
        for (urow, trow) in self.upsilon.iter_mut().zip(theta) {
            for (u, t) in urow.iter_mut().zip(trow) {
                *u = self.ell * *u + (1.0 - self.ell) * t;
            }
        }
        self.theta = theta.to_vec();
        self.share_sets = share_sets_from(&self.upsilon);
        Ok(&self.share_sets)
    }
}

/// `S_m = {m} + {i != m : upsilon[i][m] > 0}`.
pub fn share_sets_from(upsilon: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let m = upsilon.len();
    (0..m).map(|t| (0..m).filter(|&i| i == t || upsilon[i][t] > 0.0).collect()).collect()
}

/// `1 - joint / alone`, or `None` when `alone` is too small to divide by.
pub fn affinity_value(joint: f64, alone: f64) -> Option<f64> {
    (alone.abs() >= LOSS_FLOOR).then(|| 1.0 - joint / alone)
}

/// Data-weighted mix `(d_a a + d_b b) / (d_a + d_b)` of two gradients.
pub fn combine_gradients(a: &[f64], d_a: f64, b: &[f64], d_b: f64) -> Vec<f64> {
    let s = d_a + d_b;
    a.iter().zip(b).map(|(x, y)| (d_a * x + d_b * y) / s).collect()
}

/// One round's affinity matrix with guard flags.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityRound {
    pub theta: Vec<Vec<f64>>,
    /// `(i, j)` pairs whose denominator loss fell under [`LOSS_FLOOR`].
    pub guarded: Vec<(usize, usize)>,
}

/// Builds `Theta` from two loss oracles: `alone(j)` is task `j`'s validation
/// loss after applying its own extractor gradient, and `joint(i, j)` the
/// same after applying the mix of tasks `i` and `j`. The diagonal is zero.
/// Pairs are evaluated in parallel when the feature is on.
pub fn affinity_round<A, J>(tasks: usize, alone: A, joint: J) -> AffinityRound
where
    A: Fn(usize) -> f64 + Sync + Send,
    J: Fn(usize, usize) -> f64 + Sync + Send,
{
    let base = par::map_range(tasks, &alone);
    let cells = par::map_range(tasks * tasks, |k| {
        let (i, j) = (k / tasks, k % tasks);
        if i == j {
            return Some(0.0);
        }
        affinity_value(joint(i, j), base[j])
    });
    let mut theta = vec![vec![0.0; tasks]; tasks];
    let mut guarded = Vec::new();
    for (k, cell) in cells.into_iter().enumerate() {
        let (i, j) = (k / tasks, k % tasks);
        match cell {
            Some(v) => theta[i][j] = v,
            None => guarded.push((i, j)),
        }
    }
    AffinityRound { theta, guarded }
}
