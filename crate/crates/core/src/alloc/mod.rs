//! Per-round resource allocation for a fixed association: transmit power and
//! CPU frequency in closed form, bandwidth shares via KKT / Lambert-W, and a
//! block coordinate descent that alternates the two.

mod bandwidth;
mod bcd;
mod power;

pub use bandwidth::{
    bandwidth_allocate, min_share_for_rate, sum_rate_objective, BandwidthAllocation, KktMultipliers, RateDemand,
};
pub use bcd::{bcd_solve, energy_weighted_shares, AllocSolution, BcdOptions};
pub use power::{
    comm_time, energy_at_power, energy_at_comm_time, optimal_frequency, optimal_power, p_min_required, Clamp,
    PowerPoint,
};

use crate::channel::RadioModel;

/// One UAV's side of the allocation problem once its task is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    /// CPU cycles for the round (K * samples * cycles/sample).
    pub work: f64,
    /// Uplink payload (bits).
    pub bits: f64,
    /// Channel gain to the serving EV.
    pub gain: f64,
    pub f_max: f64,
    pub p_max: f64,
}

/// Quantities shared by every link in the round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    pub bandwidth: f64,
    pub noise_psd: f64,
    pub energy_coeff: f64,
    pub deadline: f64,
}

impl Medium {
    pub fn from_model(model: &RadioModel) -> Self {
        Medium {
            bandwidth: model.channel.bandwidth_total,
            noise_psd: model.channel.noise_psd,
            energy_coeff: model.compute.energy_coeff,
            deadline: model.compute.round_deadline,
        }
    }

    /// `gamma * B * N0 / h`: noise power over gain on a share `gamma`.
    pub(crate) fn noise_over_gain(&self, gamma: f64, gain: f64) -> f64 {
        gamma * self.bandwidth * self.noise_psd / gain
    }
}

/// Link of `uav` when it serves `task`; `gains` is indexed `[task][uav]`.
pub fn link_for(model: &RadioModel, gains: &[Vec<f64>], task: usize, uav: usize) -> Link {
    let c = &model.compute;
    Link {
        work: c.workload(task, uav),
        bits: c.payload_bits[task],
        gain: gains[task][uav],
        f_max: c.f_max[uav],
        p_max: c.p_max[uav],
    }
}

/// Links of every UAV under `assignment` (UAV -> task).
pub fn links_for(model: &RadioModel, gains: &[Vec<f64>], assignment: &[usize]) -> Vec<Link> {
    assignment.iter().enumerate().map(|(n, &m)| link_for(model, gains, m, n)).collect()
}
