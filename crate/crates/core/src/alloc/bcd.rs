//! Block coordinate descent over `(p, f)` and `(gamma, p)` for a fixed
//! association.
//!
//! The first block is the closed-form power/frequency step at fixed shares.
//! The second block keeps every CPU frequency, so each UAV's uplink window
//! `tau_n = T_max - t_comp` is fixed, and re-splits the band to minimize
//! `sum_n Q_n tau_n p_n(gamma_n)`, where `p_n(gamma)` is the power that sends
//! the payload in exactly `tau_n`. Both blocks are exact minimizations of the
//! same jointly convex objective, so the objective never increases.

use std::f64::consts::LN_2;

use super::bandwidth::{fill_simplex, min_share_for_rate};
use super::power::{comm_time, optimal_power, p_min_required, POWER_RTOL};
use super::{Link, Medium};
use crate::error::Infeasibility;
use crate::lambert::solve_one_minus_x_exp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcdOptions {
    pub max_iters: usize,
    /// Stop once the objective moves by less than this fraction of its
    /// starting magnitude.
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions { max_iters: 100, rel_tol: 1e-6, abs_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocSolution {
    pub p: Vec<f64>,
    pub f: Vec<f64>,
    pub gamma: Vec<f64>,
    pub t_comp: Vec<f64>,
    pub t_comm: Vec<f64>,
    pub e_comp: Vec<f64>,
    pub e_comm: Vec<f64>,
    /// `sum_n Q_n E_n`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the starting point followed by one entry per iteration.
    pub trace: Vec<f64>,
}

impl AllocSolution {
    pub fn energy(&self, uav: usize) -> f64 {
        self.e_comp[uav] + self.e_comm[uav]
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.p.len()).map(|n| self.energy(n)).collect()
    }
}

struct Iterate {
    p: Vec<f64>,
    f: Vec<f64>,
    gamma: Vec<f64>,
    t_comm: Vec<f64>,
}

impl Iterate {
    fn costs(&self, links: &[Link], medium: &Medium) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let t_comp = links.iter().zip(&self.f).map(|(l, f)| l.work / f).collect();
        let e_comp = links.iter().zip(&self.f).map(|(l, f)| medium.energy_coeff * l.work * f * f).collect();
        let e_comm = self.p.iter().zip(&self.t_comm).map(|(p, t)| p * t).collect();
        (t_comp, e_comp, e_comm)
    }

    fn objective(&self, links: &[Link], queues: &[f64], medium: &Medium) -> f64 {
        let (_, e_comp, e_comm) = self.costs(links, medium);
        (0..links.len()).map(|n| queues[n] * (e_comp[n] + e_comm[n])).sum()
    }
}

/// Smallest share on which `link` still sends its payload inside `window`
/// at full power.
fn power_limited_floor(link: &Link, window: f64, medium: &Medium, uav: usize) -> Result<f64, Infeasibility> {
    if !(window > 0.0) {
        return Err(Infeasibility::ComputeExceedsDeadline { uav });
    }
    let c = link.p_max * link.gain / (medium.bandwidth * medium.noise_psd);
    let rho = link.bits / (window * medium.bandwidth);
    min_share_for_rate(c, rho).ok_or(Infeasibility::RateUnreachable { uav })
}

/// Power that sends `bits` in exactly `window` on share `gamma`.
fn required_power(link: &Link, gamma: f64, window: f64, medium: &Medium) -> f64 {
    let x = link.bits * LN_2 / (gamma * medium.bandwidth * window);
    medium.noise_over_gain(gamma, link.gain) * x.exp_m1()
}

/// Shares minimizing `sum_n Q_n tau_n p_n(gamma_n)` at fixed uplink windows
/// `tau_n = T_max - W_n / f_n`, with `p_n <= p_max`. UAVs with a zero queue
/// only get the share they need at full power. Returns `current` unchanged
/// when no UAV carries weight.
pub fn energy_weighted_shares(
    links: &[Link],
    f: &[f64],
    queues: &[f64],
    current: &[f64],
    medium: &Medium,
) -> Result<Vec<f64>, Infeasibility> {
    if queues.iter().all(|&q| q <= 0.0) {
        return Ok(current.to_vec());
    }
    let n = links.len();
    let window: Vec<f64> = links.iter().zip(f).map(|(l, f)| medium.deadline - l.work / f).collect();
    let floor = (0..n)
        .map(|i| power_limited_floor(&links[i], window[i], medium, i))
        .collect::<Result<Vec<_>, _>>()?;
    let total_floor: f64 = floor.iter().sum();
    if total_floor > 1.0 {
        if total_floor <= 1.0 + 1e-12 {
            return Ok(current.to_vec());
        }
        return Err(Infeasibility::BandwidthExhausted { total_min_share: total_floor });
    }
    // Stationarity: Q tau (B N0 / h) g(x) = mu with x = Z ln2 / (gamma B tau),
    // g(x) = 1 - (1 - x) e^x. `scale` converts mu into g's argument.
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let denom = queues[i] * window[i] * medium.bandwidth * medium.noise_psd;
            if denom > 0.0 {
                links[i].gain / denom
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let a: Vec<f64> = (0..n).map(|i| links[i].bits * LN_2 / (medium.bandwidth * window[i])).collect();
    let share = |i: usize, mu: f64| -> f64 {
        if scale[i].is_infinite() {
            return 0.0;
        }
        let x = solve_one_minus_x_exp(mu * scale[i]);
        if x > 0.0 {
            a[i] / x
        } else {
            f64::INFINITY
        }
    };
    // Start the multiplier search where a typical UAV has g(x) = 1.
    let mut finite: Vec<f64> = scale.iter().copied().filter(|s| s.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let ln_mu0 = -finite[finite.len() / 2].ln();
    let (_, gamma, _) = fill_simplex(&floor, share, ln_mu0);
    Ok(gamma)
}

fn objective_at_max(links: &[Link], queues: &[f64], gamma: &[f64], medium: &Medium) -> f64 {
    let it = Iterate {
        p: links.iter().map(|l| l.p_max).collect(),
        f: links.iter().map(|l| l.f_max).collect(),
        gamma: gamma.to_vec(),
        t_comm: links.iter().zip(gamma).map(|(l, &g)| comm_time(l, g, l.p_max, medium)).collect(),
    };
    it.objective(links, queues, medium)
}

fn initial_shares(links: &[Link], medium: &Medium) -> Result<Vec<f64>, Infeasibility> {
    let n = links.len();
    let even = 1.0 / n as f64;
    let ok = links.iter().all(|l| match p_min_required(l, even, medium) {
        Ok(p) => p <= l.p_max * (1.0 + POWER_RTOL),
        Err(_) => false,
    });
    if ok {
        return Ok(vec![even; n]);
    }
    let floor = links
        .iter()
        .enumerate()
        .map(|(i, l)| power_limited_floor(l, medium.deadline - l.work / l.f_max, medium, i))
        .collect::<Result<Vec<_>, _>>()?;
    let total: f64 = floor.iter().sum();
    if total > 1.0 {
        return Err(Infeasibility::BandwidthExhausted { total_min_share: total });
    }
    let extra = (1.0 - total) / n as f64;
    Ok(floor.into_iter().map(|g| g + extra).collect())
}

/// Minimizes `sum_n Q_n E_n` over powers, frequencies and bandwidth shares
/// for a fixed association.
pub fn bcd_solve(
    links: &[Link],
    queues: &[f64],
    medium: &Medium,
    opts: &BcdOptions,
) -> Result<AllocSolution, Infeasibility> {
    assert_eq!(links.len(), queues.len(), "one queue per link");
    let n = links.len();
    let mut gamma = initial_shares(links, medium)?;
    let start = objective_at_max(links, queues, &gamma, medium);
    let tol = (opts.rel_tol * start.abs()).max(opts.abs_tol);
    let mut trace = vec![start];
    let mut prev = start;
    let mut best: Option<(f64, Iterate)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let mut it = Iterate { p: vec![0.0; n], f: vec![0.0; n], gamma: gamma.clone(), t_comm: vec![0.0; n] };
        for i in 0..n {
            let pt = optimal_power(&links[i], gamma[i], medium).map_err(|e| e.with_uav(i))?;
            it.p[i] = pt.p;
            it.f[i] = pt.f;
            it.t_comm[i] = pt.t_comm;
        }
        let after_power = it.objective(links, queues, medium);

        let next = energy_weighted_shares(links, &it.f, queues, &gamma, medium)?;
        if next != gamma {
            let mut cand = Iterate { p: vec![0.0; n], f: it.f.clone(), gamma: next.clone(), t_comm: vec![0.0; n] };
            for i in 0..n {
                let window = medium.deadline - links[i].work / it.f[i];
                cand.p[i] = required_power(&links[i], next[i], window, medium).min(links[i].p_max);
                cand.t_comm[i] = comm_time(&links[i], next[i], cand.p[i], medium);
            }
            // The share step is exact, so only rounding can make it worse.
            if cand.objective(links, queues, medium) <= after_power {
                it = cand;
                gamma = next;
            }
        }
        let value = it.objective(links, queues, medium);
        trace.push(value);
        let done = (prev - value).abs() <= tol;
        if value > prev + tol {
            log::debug!("bcd objective rose from {prev:e} to {value:e}");
        }
        prev = value;
        if best.as_ref().is_none_or(|(b, _)| value <= *b) {
            best = Some((value, it));
        }
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("bcd stopped after {iterations} iterations without meeting tolerance {tol:e}");
    }
    let (objective, it) = best.expect("at least one iteration");
    let (t_comp, e_comp, e_comm) = it.costs(links, medium);
    Ok(AllocSolution {
        p: it.p,
        f: it.f,
        gamma: it.gamma,
        t_comp,
        t_comm: it.t_comm,
        e_comp,
        e_comm,
        objective,
        iterations,
        converged,
        trace,
    })
}
