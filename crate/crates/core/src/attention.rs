//! Task attention: per-round task weights from a loss-balance softmax and a
//! softmax over cumulative Task Shapley Values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest task count for exact Shapley enumeration.
pub const MAX_SHAPLEY_TASKS: usize = 12;

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::INFINITY {
        // Infinite logits share all the mass.
        let k = x.iter().filter(|v| **v == f64::INFINITY).count() as f64;
        return x.iter().map(|v| if *v == f64::INFINITY { 1.0 / k } else { 0.0 }).collect();
    }
    let e: Vec<f64> = x.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionState {
    /// Cumulative loss per task.
    pub gamma_cum: Vec<f64>,
    /// Cumulative Task Shapley Value per task.
    pub shapley_cum: Vec<f64>,
    /// Loss EMA factor.
    pub varpi: f64,
    /// Shapley EMA factor.
    pub kappa: f64,
    /// Loss-balance weights from the last [`update_loss_weights`](Self::update_loss_weights).
    pub loss_weights: Vec<f64>,
    /// Combined weights used by the controller.
    pub weights: Vec<f64>,
}

impl AttentionState {
    pub fn new(tasks: usize, varpi: f64, kappa: f64) -> Result<Self> {
        for (name, v) in [("varpi", varpi), ("kappa", kappa)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let uniform = vec![1.0 / tasks as f64; tasks];
        Ok(AttentionState {
            gamma_cum: vec![0.0; tasks],
            shapley_cum: vec![0.0; tasks],
            varpi,
            kappa,
            loss_weights: uniform.clone(),
            weights: uniform,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.weights.len()
    }

    /// Folds this round's losses into the cumulative loss and returns the
    /// loss-balance weights `softmax(Gamma)`.
    pub fn update_loss_weights(&mut self, losses: &[f64]) -> Result<Vec<f64>> {
        if losses.len() != self.num_tasks() || losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain("one finite loss per task required".into()));
        }
        for (g, l) in self.gamma_cum.iter_mut().zip(losses) {
            *g = self.varpi * *g + (1.0 - self.varpi) * l;
        }
        self.loss_weights = softmax(&self.gamma_cum);
        Ok(self.loss_weights.clone())
    }

    /// Folds this round's Shapley values in and returns the combined weights
    /// `(loss_weights + softmax(I)) / sum`.
    pub fn combine_weights(&mut self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.num_tasks() || phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("one finite Shapley value per task required".into()));
        }
        for (c, p) in self.shapley_cum.iter_mut().zip(phi) {
            *c = self.kappa * *c + (1.0 - self.kappa) * p;
        }
        let hat = softmax(&self.shapley_cum);
        let mixed: Vec<f64> = self.loss_weights.iter().zip(&hat).map(|(a, b)| a + b).collect();
        let s: f64 = mixed.iter().sum();
        self.weights = mixed.iter().map(|v| v / s).collect();
        Ok(self.weights.clone())
    }
}

/// `binom(n, k)` as a float.
fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Task Shapley Values: each task's Shapley value in every game, averaged
/// over the games. `games[m][mask]` is game `m`'s value for the coalition
/// whose members are the set bits of `mask`; there are `M` players and `M`
/// games.
pub fn task_shapley(games: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = games.len();
    if m > MAX_SHAPLEY_TASKS {
        return Err(Error::Guard(format!("{m} tasks exceed the exact Shapley limit of {MAX_SHAPLEY_TASKS}")));
    }
    shapley_over_games(games, m)
}

/// Shapley values of `players` players averaged over any number of games.
pub fn shapley_over_games(games: &[Vec<f64>], players: usize) -> Result<Vec<f64>> {
    if players > MAX_SHAPLEY_TASKS {
        return Err(Error::Guard(format!("{players} players exceed the exact Shapley limit")));
    }
    let size = 1usize << players;
    if games.iter().any(|g| g.len() != size) {
        return Err(Error::Domain(format!("every game needs {size} coalition values")));
    }
    if games.is_empty() {
        return Ok(vec![0.0; players]);
    }
    // Weight of a coalition of size k not containing i: 1 / (n binom(n-1, k)).
    let weight: Vec<f64> = (0..players).map(|k| 1.0 / (players as f64 * binom(players - 1, k))).collect();
    let mut phi = vec![0.0; players];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in (0..size).filter(|c| c & bit == 0) {
            let w = weight[mask.count_ones() as usize];
            let marginal: f64 = games.iter().map(|g| g[mask | bit] - g[mask]).sum();
            *p += w * marginal;
        }
        *p /= games.len() as f64;
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::oracle::shapley_permutations;

    fn random_games(rng: &mut impl Rng, m: usize) -> Vec<Vec<f64>> {
        (0..m).map(|_| (0..1usize << m).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
    }

    #[test]
    fn softmax_edge_cases() {
        assert_eq!(softmax(&[2.0; 4]), vec![0.25; 4]);
        let w = softmax(&[1e6, 0.0, -3.0]);
        assert_eq!(w[0], 1.0);
        assert_eq!(softmax(&[f64::INFINITY, 1.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn loss_ema_matches_fold() {
        let mut s = AttentionState::new(3, 0.8, 0.8).unwrap();
        let rounds = [[0.9, 1.2, 2.0], [0.7, 1.1, 1.9], [0.5, 1.3, 1.7]];
        for l in &rounds {
            s.update_loss_weights(l).unwrap();
        }
        for m in 0..3 {
            let g = 0.2 * 0.8 * 0.8 * rounds[0][m] + 0.2 * 0.8 * rounds[1][m] + 0.2 * rounds[2][m];
            assert!((s.gamma_cum[m] - g).abs() < 1e-12);
        }
        let z: f64 = s.gamma_cum.iter().map(|g| g.exp()).sum();
        for m in 0..3 {
            assert!((s.loss_weights[m] - s.gamma_cum[m].exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn higher_loss_never_lowers_weight() {
        let mut base = AttentionState::new(3, 0.8, 0.8).unwrap();
        let mut bumped = base.clone();
        let a = base.update_loss_weights(&[1.0, 1.0, 1.0]).unwrap();
        let b = bumped.update_loss_weights(&[1.5, 1.0, 1.0]).unwrap();
        assert!(b[0] >= a[0]);
    }

    #[test]
    fn combined_weights_identities() {
        let mut s = AttentionState::new(3, 0.8, 0.0).unwrap();
        s.loss_weights = softmax(&[0.3, -0.2, 0.5]);
        let w = s.combine_weights(&[0.3, -0.2, 0.5]).unwrap();
        for (a, b) in w.iter().zip(&s.loss_weights) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut s = AttentionState::new(3, 0.8, 0.8).unwrap();
        s.loss_weights = vec![0.5, 0.3, 0.2];
        let w = s.combine_weights(&[0.0; 3]).unwrap();
        for (a, b) in w.iter().zip(&[0.5, 0.3, 0.2]) {
            assert!((a - (b + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_trajectory_matches_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = AttentionState::new(4, 0.8, 0.8).unwrap();
        let (mut gam, mut cum) = ([0.0f64; 4], [0.0f64; 4]);
        for _ in 0..20 {
            let loss: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
            let phi: Vec<f64> = (0..4).map(|_| rng.random_range(-0.2..0.2)).collect();
            s.update_loss_weights(&loss).unwrap();
            let w = s.combine_weights(&phi).unwrap();
            let mut a = [0.0; 4];
            let mut b = [0.0; 4];
            for m in 0..4 {
                gam[m] = 0.8 * gam[m] + 0.2 * loss[m];
                cum[m] = 0.8 * cum[m] + 0.2 * phi[m];
                a[m] = gam[m].exp();
                b[m] = cum[m].exp();
            }
            let (za, zb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            let total: f64 = (0..4).map(|m| a[m] / za + b[m] / zb).sum();
            for m in 0..4 {
                assert!((w[m] - (a[m] / za + b[m] / zb) / total).abs() < 1e-12);
            }
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_games_give_their_coefficients() {
        let c = [0.3, -0.1, 0.7];
        let game: Vec<f64> =
            (0..8usize).map(|mask| (0..3).filter(|i| mask >> i & 1 == 1).map(|i| c[i]).sum()).collect();
        let phi = task_shapley(&[game.clone(), game.clone(), game]).unwrap();
        for (p, want) in phi.iter().zip(&c) {
            assert!((p - want).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_games_split_evenly() {
        let game: Vec<f64> = (0..16usize).map(|mask| (mask.count_ones() as f64).sqrt()).collect();
        let phi = task_shapley(&vec![game; 4]).unwrap();
        assert!(phi.iter().all(|p| (p - phi[0]).abs() < 1e-15));
    }

    #[test]
    fn matches_permutation_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..=4 {
            let games = random_games(&mut rng, m);
            let fast = task_shapley(&games).unwrap();
            let slow = shapley_permutations(&games, m);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "m={m}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn guard_and_shape_errors() {
        let big = vec![vec![0.0; 1 << 13]; 13];
        assert!(matches!(task_shapley(&big), Err(Error::Guard(_))));
        assert!(task_shapley(&[vec![0.0; 3]]).is_err());
    }
}
