//! Sum-rate bandwidth split at fixed powers and frequencies.
//!
//! Maximizes `sum_n gamma_n B log2(1 + c_n / gamma_n)` (with `c_n = p_n h_n /
//! (B N0)`) over the simplex, subject to each UAV still meeting its deadline.
//! Unconstrained UAVs take the Lambert-W share `gamma*(mu)`; UAVs whose
//! deadline binds take the smallest share that carries their payload in time.
//! The multiplier `mu` of the simplex constraint is found by bisection.

use std::f64::consts::LN_2;

use crate::error::Infeasibility;
use crate::lambert::{lambert_w0, solve_one_minus_x_exp};

/// Rate requirement of one UAV for the bandwidth step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDemand {
    pub p: f64,
    pub gain: f64,
    pub bits: f64,
    /// Time left for the uplink, `T_max - t_comp`.
    pub window: f64,
}

/// Multipliers of the sum-rate KKT system.
#[derive(Debug, Clone, PartialEq)]
pub struct KktMultipliers {
    /// Simplex multiplier, in bits/s per Hz of total band.
    pub mu: f64,
    /// Per-UAV flag: the deadline constraint holds with equality.
    pub lambda_active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthAllocation {
    pub gamma: Vec<f64>,
    pub kkt: KktMultipliers,
}

/// `gamma log2(1 + c / gamma)`, the spectral rate per unit total band.
pub(crate) fn share_rate(gamma: f64, c: f64) -> f64 {
    let ratio = c / gamma;
    let ln = if ratio.is_finite() { ratio.ln_1p() } else { c.ln() - gamma.ln() };
    gamma * ln / LN_2
}

/// Smallest share `gamma` with `gamma log2(1 + c / gamma) >= rho`, where
/// `rho` is the required rate divided by the total band. `None` when even the
/// whole band falls short.
pub fn min_share_for_rate(c: f64, rho: f64) -> Option<f64> {
    if rho <= 0.0 {
        return Some(0.0);
    }
    let full = share_rate(1.0, c);
    if !(full >= rho) {
        return None;
    }
    // share_rate(g) >= g * log2(1 + c) on (0, 1], so the root is below `hi`.
    let mut hi = (rho / full).min(1.0);
    if share_rate(hi, c) < rho {
        hi = 1.0;
    }
    let mut lo = 0.5 * hi;
    while share_rate(lo, c) >= rho {
        hi = lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return Some(hi);
        }
    }
    for _ in 0..200 {
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if share_rate(mid, c) >= rho {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(hi)
}

/// Interior share at multiplier `mu` for normalized SNR `c`.
fn interior_share(mu: f64, c: f64) -> f64 {
    let s = mu * LN_2;
    if s > 745.0 {
        return 0.0;
    }
    // 1 + W0(-exp(-1 - s)) loses precision as s -> 0; solve for it directly.
    let (w, one_plus_w) = if s < 1e-2 {
        let y = solve_one_minus_x_exp(-(-s).exp_m1());
        (y - 1.0, y)
    } else {
        let w = lambert_w0(-(-1.0 - s).exp()).unwrap_or(-1.0);
        (w, 1.0 + w)
    };
    c * (-w) / one_plus_w
}

/// Value of the sum-rate objective, negated (so it is minimized).
pub fn sum_rate_objective(gamma: &[f64], demands: &[RateDemand], bandwidth: f64, noise_psd: f64) -> f64 {
    -gamma
        .iter()
        .zip(demands)
        .map(|(&g, d)| bandwidth * share_rate(g, d.p * d.gain / (bandwidth * noise_psd)))
        .sum::<f64>()
}

/// Shares maximizing total rate subject to each UAV meeting its deadline.
pub fn bandwidth_allocate(
    demands: &[RateDemand],
    bandwidth: f64,
    noise_psd: f64,
) -> Result<BandwidthAllocation, Infeasibility> {
    let n = demands.len();
    let snr: Vec<f64> = demands.iter().map(|d| d.p * d.gain / (bandwidth * noise_psd)).collect();
    let mut floor = Vec::with_capacity(n);
    for (i, (d, &c)) in demands.iter().zip(&snr).enumerate() {
        if !(d.window > 0.0) {
            return Err(Infeasibility::ComputeExceedsDeadline { uav: i });
        }
        let rho = d.bits / (d.window * bandwidth);
        floor.push(min_share_for_rate(c, rho).ok_or(Infeasibility::RateUnreachable { uav: i })?);
    }
    let total_floor: f64 = floor.iter().sum();
    if total_floor > 1.0 + 1e-12 {
        return Err(Infeasibility::BandwidthExhausted { total_min_share: total_floor });
    }

    let (mu, gamma, active) = fill_simplex(&floor, |i, mu| interior_share(mu, snr[i]), 0.0);
    Ok(BandwidthAllocation { gamma, kkt: KktMultipliers { mu, lambda_active: active } })
}

/// Finds the multiplier `mu` at which `sum_i max(floor_i, share(i, mu)) = 1`,
/// where every `share(i, .)` is non-increasing in `mu`. Returns `mu`, the
/// shares (renormalized so they sum to one exactly) and which UAVs sit on
/// their floor. `ln_mu0` is a starting guess for `ln(mu)`.
pub(crate) fn fill_simplex<F>(floor: &[f64], share: F, ln_mu0: f64) -> (f64, Vec<f64>, Vec<bool>)
where
    F: Fn(usize, f64) -> f64,
{
    let n = floor.len();
    let total = |ln_mu: f64| -> f64 { (0..n).map(|i| share(i, ln_mu.exp()).max(floor[i])).sum() };
    let (mut lo, mut hi) = (ln_mu0 - 20.0, ln_mu0 + 20.0);
    for _ in 0..20 {
        if total(lo) >= 1.0 {
            break;
        }
        lo -= 40.0;
    }
    for _ in 0..20 {
        if total(hi) <= 1.0 {
            break;
        }
        hi += 40.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let mu = (0.5 * (lo + hi)).exp();

    let mut gamma: Vec<f64> = (0..n).map(|i| share(i, mu)).collect();
    let active: Vec<bool> = gamma.iter().zip(floor).map(|(g, fl)| g <= fl).collect();
    let fixed: f64 = floor.iter().zip(&active).filter(|(_, &a)| a).map(|(f, _)| f).sum();
    let free: f64 = gamma.iter().zip(&active).filter(|(_, &a)| !a).map(|(g, _)| g).sum();
    for i in 0..n {
        if active[i] {
            gamma[i] = floor[i];
        } else {
            gamma[i] *= (1.0 - fixed) / free;
        }
    }
    if free == 0.0 {
        // Every UAV sits on its floor: hand the leftover out evenly.
        let extra = (1.0 - fixed) / n as f64;
        gamma.iter_mut().for_each(|g| *g += extra);
    }
    (mu, gamma, active)
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: f64 = 1e7;
    const N0: f64 = 3.981_071_705_534_97e-21;

    fn demand(p: f64, gain: f64) -> RateDemand {
        RateDemand { p, gain, bits: 1e5, window: 1.0 }
    }

    #[test]
    fn single_uav_takes_everything() {
        let a = bandwidth_allocate(&[demand(0.1, 1e-9)], B, N0).unwrap();
        assert!((a.gamma[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let d = demand(0.1, 1e-9);
        let a = bandwidth_allocate(&[d, d], B, N0).unwrap();
        assert!((a.gamma[0] - 0.5).abs() < 1e-12 && (a.gamma[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interior_share_satisfies_stationarity() {
        // d/dgamma [gamma log2(1 + c/gamma)] = mu at the interior share.
        for &c in &[1e-3, 0.5, 20.0, 3e5] {
            for &mu in &[1e-6, 1e-3, 0.3, 2.0, 15.0] {
                let g = interior_share(mu, c);
                let a = c / g;
                let slope = a.ln_1p() / LN_2 - a / ((1.0 + a) * LN_2);
                assert!((slope - mu).abs() <= 1e-8 * mu.max(1e-3), "c={c} mu={mu} slope={slope}");
            }
        }
    }

    #[test]
    fn min_share_meets_rate_exactly() {
        for &(c, rho) in &[(10.0, 0.5), (1e5, 0.01), (0.01, 0.001)] {
            let g = min_share_for_rate(c, rho).unwrap();
            assert!((share_rate(g, c) / rho - 1.0).abs() < 1e-12);
        }
        assert!(min_share_for_rate(1.0, 2.0).is_none());
    }

    #[test]
    fn binding_deadline_gets_floor() {
        let weak = RateDemand { p: 0.1, gain: 1e-11, bits: 2e6, window: 0.5 };
        let strong = demand(0.1, 1e-8);
        let a = bandwidth_allocate(&[weak, strong, strong], B, N0).unwrap();
        assert!(a.kkt.lambda_active[0]);
        let c = weak.p * weak.gain / (B * N0);
        let floor = min_share_for_rate(c, weak.bits / (weak.window * B)).unwrap();
        assert!((a.gamma[0] - floor).abs() < 1e-12);
        assert!((a.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reports_exhausted_band() {
        let d = RateDemand { p: 0.01, gain: 1e-14, bits: 3e6, window: 0.5 };
        let out = bandwidth_allocate(&[d, d, d], B, N0);
        assert!(matches!(out, Err(Infeasibility::RateUnreachable { uav: 0 })), "{out:?}");
        let d = RateDemand { p: 0.1, gain: 1e-9, bits: 5e7, window: 1.0 };
        let out = bandwidth_allocate(&[d, d, d], B, N0);
        assert!(matches!(out, Err(Infeasibility::BandwidthExhausted { .. })), "{out:?}");
    }
}
