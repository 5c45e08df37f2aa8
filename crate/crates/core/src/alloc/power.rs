//! Closed-form power / frequency step at a fixed bandwidth share.
//!
//! With the deadline tight, choosing the uplink time `tau` fixes both the CPU
//! frequency `f = W / (T - tau)` and the power that delivers `Z` bits in
//! `tau`. The round energy
//!
//! ```text
//! E(tau) = s W^3 / (T - tau)^2 + tau * k * (2^(Z / (gamma B tau)) - 1),   k = gamma B N0 / h
//! ```
//!
//! is strictly convex on `(0, T)`, so its stationary point is found by a
//! bracketed Newton iteration and then clamped to the feasible power range.

use std::f64::consts::LN_2;

use super::{Link, Medium};
use crate::channel::rate;
use crate::error::Infeasibility;
use crate::lambert::g_stable;

const EDGE: f64 = 1e-9;

/// Relative slack on `p_min <= p_max`.
pub(crate) const POWER_RTOL: f64 = 1e-9;

/// Which end of `[p_min, p_max]`, if any, the optimal power sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    Interior,
    AtMin,
    AtMax,
}

/// Optimal operating point of one UAV at a fixed share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPoint {
    pub p: f64,
    pub f: f64,
    pub t_comp: f64,
    pub t_comm: f64,
    pub e_comp: f64,
    pub e_comm: f64,
    /// Unconstrained stationary power, before clamping.
    pub p_stationary: f64,
    pub p_min: f64,
    pub clamp: Clamp,
}

impl PowerPoint {
    pub fn energy(&self) -> f64 {
        self.e_comp + self.e_comm
    }
}

/// Longest uplink window left after computing at `f_max`.
fn comm_window_cap(link: &Link, medium: &Medium) -> f64 {
    medium.deadline - link.work / link.f_max
}

/// Power that sends `bits` in exactly `tau` seconds on share `gamma`.
fn power_for_time(link: &Link, gamma: f64, tau: f64, medium: &Medium) -> f64 {
    let x = link.bits * LN_2 / (gamma * medium.bandwidth * tau);
    medium.noise_over_gain(gamma, link.gain) * x.exp_m1()
}

/// Uplink time at power `p` on share `gamma`.
pub fn comm_time(link: &Link, gamma: f64, p: f64, medium: &Medium) -> f64 {
    let r = rate(p, link.gain, gamma, medium.bandwidth, medium.noise_psd);
    if r > 0.0 {
        link.bits / r
    } else {
        f64::INFINITY
    }
}

/// Smallest power meeting the deadline when computing at `f_max`.
pub fn p_min_required(link: &Link, gamma: f64, medium: &Medium) -> Result<f64, Infeasibility> {
    let cap = comm_window_cap(link, medium);
    if !(cap > 0.0) {
        return Err(Infeasibility::ComputeExceedsDeadline { uav: 0 });
    }
    Ok(power_for_time(link, gamma, cap, medium))
}

/// Frequency that makes the deadline tight after an uplink of `t_comm`.
pub fn optimal_frequency(link: &Link, t_comm: f64, medium: &Medium) -> Result<f64, Infeasibility> {
    let slack = medium.deadline - t_comm;
    if !(slack > 0.0) {
        return Err(Infeasibility::RateUnreachable { uav: 0 });
    }
    let f = link.work / slack;
    if f > link.f_max * (1.0 + 1e-12) {
        return Err(Infeasibility::ComputeExceedsDeadline { uav: 0 });
    }
    Ok(f.min(link.f_max))
}

/// Round energy when the uplink takes `tau` and the deadline is tight.
pub fn energy_at_comm_time(link: &Link, gamma: f64, tau: f64, medium: &Medium) -> f64 {
    let left = medium.deadline - tau;
    let e_comp = medium.energy_coeff * link.work.powi(3) / (left * left);
    e_comp + tau * power_for_time(link, gamma, tau, medium)
}

/// Round energy at power `p`, with the frequency chosen to meet the deadline.
/// Returns `+inf` if no frequency up to `f_max` fits.
pub fn energy_at_power(link: &Link, gamma: f64, p: f64, medium: &Medium) -> f64 {
    let tau = comm_time(link, gamma, p, medium);
    match optimal_frequency(link, tau, medium) {
        Ok(f) => medium.energy_coeff * link.work * f * f + p * tau,
        Err(_) => f64::INFINITY,
    }
}

/// `ln g(x)` and `g'(x) / g(x)` for `g(x) = 1 - (1 - x) e^x`, `x > 0`.
fn log_g(x: f64) -> (f64, f64) {
    if x > 40.0 {
        // g = (x - 1) e^x + 1, and the trailing 1 is below rounding.
        let core = x - 1.0 + (-x).exp();
        (x + core.ln(), x / core)
    } else {
        let g = g_stable(x);
        (g.ln(), x * x.exp() / g)
    }
}

/// Stationary uplink time of the tight-deadline energy on `(0, T)`.
///
/// Solves `ln(k g(a / tau)) = ln(2 s W^3 / (T - tau)^3)`; in log form the
/// exponential branch is nearly linear, so Newton converges in a few steps.
fn stationary_comm_time(link: &Link, gamma: f64, medium: &Medium) -> f64 {
    let t = medium.deadline;
    let ln_w3 = (2.0 * medium.energy_coeff).ln() + 3.0 * link.work.ln();
    let ln_k = medium.noise_over_gain(gamma, link.gain).ln();
    let a = link.bits * LN_2 / (gamma * medium.bandwidth);
    // Decreasing in tau: positive while the uplink is still too expensive.
    let phi = |tau: f64| -> (f64, f64) {
        let left = t - tau;
        let (lg, ratio) = log_g(a / tau);
        let value = ln_k + lg - ln_w3 + 3.0 * left.ln();
        let slope = -a / (tau * tau) * ratio - 3.0 / left;
        (value, slope)
    };

    let (mut lo, mut hi) = (EDGE, t - EDGE);
    if phi(lo).0 <= 0.0 {
        return lo;
    }
    if phi(hi).0 >= 0.0 {
        return hi;
    }
    let mut tau = 0.5 * t;
    for iter in 0..200 {
        let (v, d) = phi(tau);
        if v == 0.0 {
            return tau;
        }
        if v > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let newton = tau - v / d;
        let next = if iter % 8 != 7 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if (next - tau).abs() <= 1e-15 * tau || hi - lo <= 1e-15 * hi {
            return next;
        }
        tau = next;
    }
    tau
}

/// Energy-minimizing power and frequency for one UAV at share `gamma`.
///
/// The stationary power is clamped to `[p_min, p_max]`, where `p_min` is the
/// power that meets the deadline at `f_max`. Scaling the energy by a queue
/// weight does not move the minimizer, so no weight is taken.
pub fn optimal_power(link: &Link, gamma: f64, medium: &Medium) -> Result<PowerPoint, Infeasibility> {
    let cap = comm_window_cap(link, medium);
    if !(cap > 0.0) {
        return Err(Infeasibility::ComputeExceedsDeadline { uav: 0 });
    }
    let p_min = power_for_time(link, gamma, cap, medium);
    // Shares sized for full power land on `p_max` up to rounding.
    if !(p_min <= link.p_max * (1.0 + POWER_RTOL)) {
        return Err(Infeasibility::PowerExceedsMax { uav: 0, p_min, p_max: link.p_max });
    }
    let p_min = p_min.min(link.p_max);

    let tau_hat = stationary_comm_time(link, gamma, medium);
    let p_hat = power_for_time(link, gamma, tau_hat, medium);
    let (p, tau, clamp) = if p_hat >= link.p_max {
        (link.p_max, comm_time(link, gamma, link.p_max, medium), Clamp::AtMax)
    } else if tau_hat >= cap {
        (p_min, cap, Clamp::AtMin)
    } else {
        (p_hat, tau_hat, Clamp::Interior)
    };
    let f = if clamp == Clamp::AtMin { link.f_max } else { (link.work / (medium.deadline - tau)).min(link.f_max) };
    let t_comp = link.work / f;
    Ok(PowerPoint {
        p,
        f,
        t_comp,
        t_comm: tau,
        e_comp: medium.energy_coeff * link.work * f * f,
        e_comm: p * tau,
        p_stationary: p_hat,
        p_min,
        clamp,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn medium() -> Medium {
        Medium { bandwidth: 1e7, noise_psd: 10f64.powf(-17.4) * 1e-3, energy_coeff: 1e-28, deadline: 3.0 }
    }

    pub(crate) fn link() -> Link {
        Link { work: 64.0 * 5.0 * 2e6, bits: 4e5, gain: 2e-9, f_max: 2e9, p_max: 1.0 }
    }

    #[test]
    fn p_min_vanishes_with_payload() {
        let m = medium();
        let mut l = link();
        l.bits = 1e-9;
        assert!(p_min_required(&l, 0.1, &m).unwrap() < 1e-15);
    }

    #[test]
    fn p_min_increases_when_share_halves() {
        let m = medium();
        let l = link();
        let a = p_min_required(&l, 0.2, &m).unwrap();
        let b = p_min_required(&l, 0.1, &m).unwrap();
        assert!(b > a);
    }

    #[test]
    fn p_min_plug_back() {
        let m = medium();
        let l = link();
        let gamma = 0.07;
        let p = p_min_required(&l, gamma, &m).unwrap();
        let r = rate(p, l.gain, gamma, m.bandwidth, m.noise_psd);
        let target = l.bits / (m.deadline - l.work / l.f_max);
        assert!((r / target - 1.0).abs() < 1e-9);
    }

    #[test]
    fn p_min_compute_bound() {
        let m = medium();
        let mut l = link();
        l.work = 7e9;
        assert!(matches!(p_min_required(&l, 0.5, &m), Err(Infeasibility::ComputeExceedsDeadline { .. })));
    }

    #[test]
    fn frequency_reciprocal_law() {
        let m = medium();
        let l = link();
        let f0 = optimal_frequency(&l, 0.0, &m).unwrap();
        assert!((f0 - l.work / m.deadline).abs() < 1e-6);
        let f1 = optimal_frequency(&l, m.deadline / 2.0, &m).unwrap();
        assert!((f1 / f0 - 2.0).abs() < 1e-12);
        assert!(optimal_frequency(&l, m.deadline - 1e-6, &m).is_err());
    }

    #[test]
    fn energy_is_strictly_convex_in_comm_time() {
        let m = medium();
        let l = link();
        let n = 1000;
        let h = m.deadline / (n + 1) as f64;
        let e: Vec<f64> = (1..=n).map(|i| energy_at_comm_time(&l, 0.1, i as f64 * h, &m)).collect();
        for w in e.windows(3) {
            if w.iter().all(|x| x.is_finite()) {
                assert!(w[0] - 2.0 * w[1] + w[2] > 0.0);
            }
        }
    }

    #[test]
    fn interior_point_beats_neighbours() {
        let m = medium();
        let l = link();
        let pt = optimal_power(&l, 0.1, &m).unwrap();
        assert_eq!(pt.clamp, Clamp::Interior);
        let e = energy_at_power(&l, 0.1, pt.p, &m);
        assert!((e - pt.energy()).abs() <= 1e-12 * e);
        for s in [0.99, 1.01] {
            let p = (pt.p * s).clamp(pt.p_min, l.p_max);
            assert!(energy_at_power(&l, 0.1, p, &m) >= e);
        }
        assert!((pt.t_comp + pt.t_comm - m.deadline).abs() < 1e-9);
    }

    #[test]
    fn clamps_to_p_max() {
        let m = medium();
        let mut l = link();
        l.p_max = 1e-3;
        // Large compute load pushes the stationary point towards short uplinks.
        l.work = 5e9;
        let pt = optimal_power(&l, 0.5, &m).unwrap();
        assert_eq!(pt.clamp, Clamp::AtMax);
        assert_eq!(pt.p, l.p_max);
        assert!(pt.p_stationary >= l.p_max);
    }

    #[test]
    fn clamps_to_p_min() {
        let m = medium();
        let mut l = link();
        // A slow, cheap CPU: finishing compute early never pays off.
        l.work = 1e3;
        l.f_max = 1e6;
        let pt = optimal_power(&l, 0.1, &m).unwrap();
        assert_eq!(pt.clamp, Clamp::AtMin);
        assert_eq!(pt.f, l.f_max);
        assert!((pt.p - pt.p_min).abs() <= 1e-15 * pt.p);
    }

    #[test]
    fn infeasible_when_p_min_above_p_max() {
        let m = medium();
        let mut l = link();
        l.p_max = 1e-12;
        assert!(matches!(optimal_power(&l, 0.01, &m), Err(Infeasibility::PowerExceedsMax { .. })));
    }
}
