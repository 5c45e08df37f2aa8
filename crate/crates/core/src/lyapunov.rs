//! Virtual energy-deficit queues and the drift-plus-penalty objective.
//!
//! Queue `Q_n` tracks how far UAV `n` has overspent its per-round energy
//! budget. Each round the controller minimizes `sum_n Q_n E_n - V * utility`,
//! trading budget compliance against weighted training data.

use serde::{Deserialize, Serialize};

use crate::channel::RadioModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualQueueState {
    /// Backlog per UAV (J).
    pub q: Vec<f64>,
    /// Per-round budget `E_max / T` per UAV (J).
    pub e_budget_per_round: Vec<f64>,
    /// Number of rounds `T`.
    pub horizon: usize,
    /// Tradeoff weight `V` (J per utility unit).
    pub v_param: f64,
}

impl VirtualQueueState {
    /// Empty queues for the given total budgets `e_max` over `horizon` rounds.
    pub fn new(e_max: &[f64], horizon: usize, v_param: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least one round".into()));
        }
        if !(v_param >= 0.0 && v_param.is_finite()) {
            return Err(Error::Config(format!("V must be finite and non-negative, got {v_param}")));
        }
        if let Some(bad) = e_max.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("energy budget must be positive, got {bad}")));
        }
        Ok(VirtualQueueState {
            q: vec![0.0; e_max.len()],
            e_budget_per_round: e_max.iter().map(|e| e / horizon as f64).collect(),
            horizon,
            v_param,
        })
    }

    pub fn num_uavs(&self) -> usize {
        self.q.len()
    }

    /// `Q' = max(Q + E - E_bar, 0)` per UAV.
    pub fn queue_update(&self, energy: &[f64]) -> Result<Self> {
        if energy.len() != self.q.len() {
            return Err(Error::Domain("one energy value per uav required".into()));
        }
        if let Some(e) = energy.iter().find(|e| !(**e >= 0.0)) {
            return Err(Error::Domain(format!("energy must be non-negative, got {e}")));
        }
        let q = self
            .q
            .iter()
            .zip(energy)
            .zip(&self.e_budget_per_round)
            .map(|((q, e), b)| (q + e - b).max(0.0))
            .collect();
        Ok(VirtualQueueState { q, ..self.clone() })
    }

    /// Drift-plus-penalty value of a candidate decision in the current state.
    pub fn dpp_objective(&self, energy: &[f64], alpha: &[f64], assignment: &[usize], data_sizes: &[f64]) -> f64 {
        dpp_objective(&self.q, energy, self.v_param, alpha, assignment, data_sizes)
    }
}

/// `sum_m alpha_m sum_n beta_{m,n} D_n`, with `assignment[n]` the task of UAV `n`.
pub fn utility(alpha: &[f64], assignment: &[usize], data_sizes: &[f64]) -> f64 {
    assignment.iter().zip(data_sizes).map(|(&m, d)| alpha[m] * d).sum()
}

/// `sum_n Q_n E_n - V * sum_m alpha_m sum_n beta_{m,n} D_n`.
pub fn dpp_objective(
    q: &[f64],
    energy: &[f64],
    v: f64,
    alpha: &[f64],
    assignment: &[usize],
    data_sizes: &[f64],
) -> f64 {
    let weighted: f64 = q.iter().zip(energy).map(|(q, e)| q * e).sum();
    weighted - v * utility(alpha, assignment, data_sizes)
}

/// Upper bound on any single UAV's round energy: full power for the whole
/// deadline plus the most expensive task at `f_max`.
pub fn energy_cap(model: &RadioModel, uav: usize) -> f64 {
    let c = &model.compute;
    let f = c.f_max[uav];
    let comp = (0..c.num_tasks()).map(|m| c.energy_coeff * c.workload(m, uav) * f * f).fold(0.0, f64::max);
    c.p_max[uav] * c.round_deadline + comp
}

/// Constant `B = (N/2) max(max_n E_bar_n^2, Xi)` of the one-step drift bound,
/// with `Xi = max_n (energy cap)^2`.
pub fn drift_bound_constant(model: &RadioModel, e_budget_per_round: &[f64]) -> f64 {
    let n = model.num_uavs();
    let xi = (0..n).map(|u| energy_cap(model, u).powi(2)).fold(0.0, f64::max);
    let budget = e_budget_per_round.iter().map(|e| e * e).fold(0.0, f64::max);
    0.5 * n as f64 * budget.max(xi)
}

/// Both sides of the long-run average energy bound for a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftDiagnostics {
    pub drift_bound_const: f64,
    /// `(1/T) sum_t sum_n E_{n,t}`.
    pub lhs_energy_avg: f64,
    /// `sum_n E_bar_n + sqrt(2B/T + 2V sum_t U_t / T^2)`, where `U_t` is the
    /// observed max-utility proxy for the unknown per-round optimum.
    pub rhs_bound: f64,
}

impl DriftDiagnostics {
    pub fn holds(&self) -> bool {
        self.lhs_energy_avg <= self.rhs_bound
    }
}

/// Evaluates the average-energy bound. `energy[t][n]` is UAV `n`'s energy in
/// round `t`; `utility_proxy[t]` upper-bounds that round's optimal utility.
pub fn energy_bound_check(
    energy: &[Vec<f64>],
    utility_proxy: &[f64],
    e_budget_per_round: &[f64],
    drift_bound_const: f64,
    v: f64,
) -> DriftDiagnostics {
    let t = energy.len();
    let budget: f64 = e_budget_per_round.iter().sum();
    if t == 0 {
        return DriftDiagnostics { drift_bound_const, lhs_energy_avg: 0.0, rhs_bound: budget };
    }
    let tf = t as f64;
    let lhs = energy.iter().flatten().sum::<f64>() / tf;
    let u: f64 = utility_proxy.iter().sum();
    let rhs = budget + (2.0 * drift_bound_const / tf + 2.0 * v * u / (tf * tf)).sqrt();
    DriftDiagnostics { drift_bound_const, lhs_energy_avg: lhs, rhs_bound: rhs }
}
