//! Air-to-ground channel, FDMA uplink rate and per-round computation /
//! communication costs.
//!
//! All quantities are SI (W, Hz, J, s, m). Decibel forms are only accepted by
//! the config parser.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Channel power gain at the 1 m reference distance.
    pub alpha0: f64,
    /// Path-loss exponent.
    pub nu: f64,
    /// Extra attenuation of the NLoS component, in (0, 1].
    pub mu_nlos: f64,
    pub a_env: f64,
    pub b_env: f64,
    /// Noise power spectral density N0 (W/Hz).
    pub noise_psd: f64,
    /// Total uplink bandwidth B (Hz).
    pub bandwidth_total: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.alpha0 > 0.0, "alpha0 must be > 0"),
            (self.nu > 0.0, "nu must be > 0"),
            (self.mu_nlos > 0.0 && self.mu_nlos <= 1.0, "mu_nlos must lie in (0, 1]"),
            (self.a_env > 0.0, "a_env must be > 0"),
            (self.b_env > 0.0, "b_env must be > 0"),
            (self.noise_psd > 0.0, "noise_psd must be > 0"),
            (self.bandwidth_total > 0.0, "bandwidth_total must be > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub uav_xy: Vec<[f64; 2]>,
    pub ev_xy: Vec<[f64; 2]>,
    /// Flight altitude per UAV.
    pub altitude: Vec<f64>,
}

impl Geometry {
    pub fn num_uavs(&self) -> usize {
        self.uav_xy.len()
    }

    pub fn num_evs(&self) -> usize {
        self.ev_xy.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.altitude.len() != self.uav_xy.len() {
            return Err(Error::Config("one altitude per uav required".into()));
        }
        if self.altitude.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Config("altitudes must be finite and > 0".into()));
        }
        let finite = |p: &[f64; 2]| p[0].is_finite() && p[1].is_finite();
        if !self.uav_xy.iter().all(finite) || !self.ev_xy.iter().all(finite) {
            return Err(Error::Config("coordinates must be finite".into()));
        }
        Ok(())
    }

    fn check(&self, uav: usize, ev: usize) -> Result<()> {
        if uav >= self.num_uavs() || ev >= self.num_evs() {
            return Err(Error::Domain(format!(
                "index out of range: uav {uav} of {}, ev {ev} of {}",
                self.num_uavs(),
                self.num_evs()
            )));
        }
        Ok(())
    }

    /// 3-D UAV-to-EV distance.
    pub fn distance(&self, uav: usize, ev: usize) -> Result<f64> {
        self.check(uav, ev)?;
        let [ux, uy] = self.uav_xy[uav];
        let [ex, ey] = self.ev_xy[ev];
        let h = self.altitude[uav];
        Ok(((ux - ex).powi(2) + (uy - ey).powi(2) + h * h).sqrt())
    }

    /// Elevation angle in degrees, in (0, 90].
    pub fn elevation_deg(&self, uav: usize, ev: usize) -> Result<f64> {
        let d = self.distance(uav, ev)?;
        let ratio = (self.altitude[uav] / d).min(1.0);
        Ok(180.0 / PI * ratio.asin())
    }
}

/// Probability of a line-of-sight link at elevation `theta_deg` (degrees).
pub fn los_probability(theta_deg: f64, params: &ChannelParams) -> Result<f64> {
    if !(theta_deg > 0.0 && theta_deg <= 90.0) {
        return Err(Error::Domain(format!("elevation {theta_deg} outside (0, 90]")));
    }
    Ok(1.0 / (1.0 + params.a_env * (-params.b_env * (theta_deg - params.a_env)).exp()))
}

/// Average channel power gain between `uav` and `ev`, mixing LoS and NLoS
/// attenuation by the LoS probability.
pub fn channel_gain(uav: usize, ev: usize, geom: &Geometry, params: &ChannelParams) -> Result<f64> {
    let d = geom.distance(uav, ev)?;
    let p_los = los_probability(geom.elevation_deg(uav, ev)?, params)?;
    let mix = p_los + params.mu_nlos * (1.0 - p_los);
    Ok(mix * params.alpha0 * d.powf(-params.nu))
}

/// Achievable FDMA uplink rate in bit/s for power `p`, gain `h` and bandwidth
/// share `gamma`.
pub fn uplink_rate(p: f64, h: f64, gamma: f64, params: &ChannelParams) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("bandwidth share {gamma} must be > 0")));
    }
    if p < 0.0 || !(h > 0.0) {
        return Err(Error::Domain(format!("need p >= 0 and h > 0 (p = {p}, h = {h})")));
    }
    Ok(rate(p, h, gamma, params.bandwidth_total, params.noise_psd))
}

/// Unchecked rate kernel shared with the solvers.
#[inline]
pub(crate) fn rate(p: f64, h: f64, gamma: f64, bandwidth: f64, noise_psd: f64) -> f64 {
    let w = gamma * bandwidth;
    w * (p * h / (w * noise_psd)).ln_1p() / LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeParams {
    /// CPU cycles per sample, indexed `[task][uav]`.
    pub cycles_per_sample: Vec<Vec<f64>>,
    pub local_iters: usize,
    pub batch_size: usize,
    /// Effective switched capacitance of the CPU.
    pub energy_coeff: f64,
    pub f_max: Vec<f64>,
    pub p_max: Vec<f64>,
    /// Gradient payload per task (bits).
    pub payload_bits: Vec<f64>,
    /// Per-round deadline T_max (s).
    pub round_deadline: f64,
    /// Samples held by each UAV.
    pub data_sizes: Vec<f64>,
    /// When set, each local iteration sweeps the full shard instead of one
    /// mini-batch.
    #[serde(default)]
    pub full_batch: bool,
}

impl ComputeParams {
    pub fn num_tasks(&self) -> usize {
        self.cycles_per_sample.len()
    }

    pub fn num_uavs(&self) -> usize {
        self.f_max.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_uavs();
        let m = self.num_tasks();
        if self.p_max.len() != n || self.data_sizes.len() != n {
            return Err(Error::Config("per-uav vectors disagree in length".into()));
        }
        if self.payload_bits.len() != m || self.cycles_per_sample.iter().any(|row| row.len() != n) {
            return Err(Error::Config("per-task tables disagree in shape".into()));
        }
        let pos = |x: &f64| *x > 0.0 && x.is_finite();
        let ok = self.cycles_per_sample.iter().flatten().all(pos)
            && self.f_max.iter().all(pos)
            && self.p_max.iter().all(pos)
            && self.payload_bits.iter().all(pos)
            && self.data_sizes.iter().all(pos)
            && pos(&self.energy_coeff)
            && pos(&self.round_deadline)
            && self.local_iters > 0
            && self.batch_size > 0;
        if !ok {
            return Err(Error::Config("compute parameters must be strictly positive and finite".into()));
        }
        Ok(())
    }

    /// Samples processed by `uav` in one round (K local iterations).
    pub fn samples_per_round(&self, uav: usize) -> f64 {
        let per_iter = if self.full_batch { self.data_sizes[uav] } else { self.batch_size as f64 };
        self.local_iters as f64 * per_iter
    }

    /// Total CPU cycles for `uav` training `task` for one round.
    pub fn workload(&self, task: usize, uav: usize) -> f64 {
        self.samples_per_round(uav) * self.cycles_per_sample[task][uav]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub t_comp: f64,
    pub t_comm: f64,
    pub e_comp: f64,
    pub e_comm: f64,
}

impl CostBreakdown {
    pub fn energy(&self) -> f64 {
        self.e_comp + self.e_comm
    }

    pub fn time(&self) -> f64 {
        self.t_comp + self.t_comm
    }
}

/// One UAV's operating point for a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavDecision {
    pub task: usize,
    pub p: f64,
    pub f: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub cost: CostBreakdown,
    /// `t_comp + t_comm <= T_max` (with a 1e-9 relative slack).
    pub feasible: bool,
}

/// The static radio/compute description shared by every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioModel {
    pub channel: ChannelParams,
    pub geometry: Geometry,
    pub compute: ComputeParams,
}

impl RadioModel {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.geometry.validate()?;
        self.compute.validate()?;
        if self.geometry.num_uavs() != self.compute.num_uavs() {
            return Err(Error::Config("geometry and compute disagree on the number of uavs".into()));
        }
        if self.geometry.num_evs() != self.compute.num_tasks() {
            return Err(Error::Config("one ev per task required".into()));
        }
        Ok(())
    }

    pub fn num_uavs(&self) -> usize {
        self.compute.num_uavs()
    }

    pub fn num_tasks(&self) -> usize {
        self.compute.num_tasks()
    }

    /// Gains indexed `[task][uav]`.
    pub fn gain_matrix(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.num_tasks())
            .map(|m| (0..self.num_uavs()).map(|n| channel_gain(n, m, &self.geometry, &self.channel)).collect())
            .collect()
    }

    /// Time and energy of every UAV under `decisions` (one entry per UAV).
    pub fn round_costs(&self, decisions: &[UavDecision]) -> Result<Vec<CostReport>> {
        round_costs(decisions, &self.geometry, &self.channel, &self.compute)
    }
}

/// Time and energy of every UAV for the given operating points.
///
/// `decisions[n]` is UAV `n`'s (task, p, f, gamma). Deadline violations are
/// reported through [`CostReport::feasible`], not as an error.
pub fn round_costs(
    decisions: &[UavDecision],
    geom: &Geometry,
    channel: &ChannelParams,
    compute: &ComputeParams,
) -> Result<Vec<CostReport>> {
    if decisions.len() != compute.num_uavs() {
        return Err(Error::Domain("one decision per uav required".into()));
    }
    decisions
        .iter()
        .enumerate()
        .map(|(n, d)| {
            if d.task >= compute.num_tasks() {
                return Err(Error::Domain(format!("uav {n} assigned to unknown task {}", d.task)));
            }
            if !(d.f > 0.0 && d.f <= compute.f_max[n] * (1.0 + 1e-12)) {
                return Err(Error::Domain(format!("uav {n}: frequency {} outside (0, f_max]", d.f)));
            }
            if !(d.p >= 0.0 && d.p <= compute.p_max[n] * (1.0 + 1e-12)) {
                return Err(Error::Domain(format!("uav {n}: power {} outside [0, p_max]", d.p)));
            }
            let h = channel_gain(n, d.task, geom, channel)?;
            let work = compute.workload(d.task, n);
            let t_comp = work / d.f;
            let e_comp = compute.energy_coeff * work * d.f * d.f;
            let r = uplink_rate(d.p, h, d.gamma, channel)?;
            let t_comm = if r > 0.0 { compute.payload_bits[d.task] / r } else { f64::INFINITY };
            let e_comm = if d.p == 0.0 { 0.0 } else { d.p * t_comm };
            let cost = CostBreakdown { t_comp, t_comm, e_comp, e_comm };
            let feasible = cost.time() <= compute.round_deadline * (1.0 + 1e-9);
            Ok(CostReport { cost, feasible })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn params() -> ChannelParams {
        ChannelParams {
            alpha0: 1e-4,
            nu: 2.2,
            mu_nlos: 0.2,
            a_env: 9.61,
            b_env: 0.16,
            noise_psd: 10f64.powf(-20.4),
            bandwidth_total: 10e6,
        }
    }

    fn geom() -> Geometry {
        Geometry {
            uav_xy: vec![[0.0, 0.0], [300.0, 400.0]],
            ev_xy: vec![[0.0, 0.0], [100.0, -50.0]],
            altitude: vec![120.0, 150.0],
        }
    }

    #[test]
    fn los_at_theta_equal_a() {
        let p = params();
        let v = los_probability(p.a_env, &p).unwrap();
        assert!((v - 1.0 / (1.0 + p.a_env)).abs() < 1e-15);
    }

    #[test]
    fn los_limit_large_b() {
        let mut p = params();
        p.b_env = 50.0;
        assert!(los_probability(90.0, &p).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn los_domain() {
        let p = params();
        assert!(los_probability(0.0, &p).is_err());
        assert!(los_probability(90.5, &p).is_err());
        assert!(los_probability(f64::NAN, &p).is_err());
    }

    #[test]
    fn los_strictly_increasing() {
        let p = params();
        let mut prev = 0.0;
        for i in 1..=900 {
            let v = los_probability(i as f64 / 10.0, &p).unwrap();
            assert!(v > prev && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn overhead_gain() {
        let p = params();
        let g = geom();
        let h = channel_gain(0, 0, &g, &p).unwrap();
        let pl = los_probability(90.0, &p).unwrap();
        let expect = (pl + p.mu_nlos * (1.0 - pl)) * p.alpha0 * 120f64.powf(-p.nu);
        assert!((h - expect).abs() <= 1e-15 * expect);
        assert!((g.elevation_deg(0, 0).unwrap() - 90.0).abs() < 1e-12);
    }

    #[test]
    fn mu_one_collapses_mixture() {
        let mut p = params();
        p.mu_nlos = 1.0;
        let g = geom();
        let d = g.distance(1, 1).unwrap();
        let h = channel_gain(1, 1, &g, &p).unwrap();
        assert!((h - p.alpha0 * d.powf(-p.nu)).abs() <= 1e-15 * h);
    }

    #[test]
    fn gain_index_error() {
        assert!(channel_gain(5, 0, &geom(), &params()).is_err());
    }

    #[test]
    fn rate_zero_power_and_domain() {
        let p = params();
        assert_eq!(uplink_rate(0.0, 1e-7, 0.3, &p).unwrap(), 0.0);
        assert!(uplink_rate(0.1, 1e-7, 0.0, &p).is_err());
        assert!(uplink_rate(0.1, 1e-7, -0.1, &p).is_err());
    }

    #[test]
    fn rate_power_limited_regime_saturates() {
        let p = params();
        // With SNR << 1, log2(1 + x) ~ x / ln2 and the gamma factors cancel:
        // the rate saturates at p h / (N0 ln2) and barely moves with gamma.
        let h = 1e-7;
        let r1 = uplink_rate(1e-18, h, 0.1, &p).unwrap();
        let r2 = uplink_rate(1e-18, h, 0.2, &p).unwrap();
        assert!(r2 > r1);
        assert!((r2 / r1 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn round_costs_f_squared_law() {
        let p = params();
        let g = geom();
        let c = ComputeParams {
            cycles_per_sample: vec![vec![1e5, 2e5], vec![3e5, 1e5]],
            local_iters: 5,
            batch_size: 64,
            energy_coeff: 1e-28,
            f_max: vec![2e9, 2e9],
            p_max: vec![0.1, 0.1],
            payload_bits: vec![1e5, 2e5],
            round_deadline: 3.0,
            data_sizes: vec![100.0, 200.0],
            full_batch: false,
        };
        let d1 = vec![
            UavDecision { task: 0, p: 0.05, f: 5e8, gamma: 0.5 },
            UavDecision { task: 1, p: 0.05, f: 5e8, gamma: 0.5 },
        ];
        let mut d2 = d1.clone();
        d2[0].f = 1e9;
        let a = round_costs(&d1, &g, &p, &c).unwrap();
        let b = round_costs(&d2, &g, &p, &c).unwrap();
        assert!((b[0].cost.e_comp / a[0].cost.e_comp - 4.0).abs() < 1e-12);
        assert!((a[0].cost.t_comp / b[0].cost.t_comp - 2.0).abs() < 1e-12);
        // pure function
        let again = round_costs(&d1, &g, &p, &c).unwrap();
        assert_eq!(a, again);
    }
}
