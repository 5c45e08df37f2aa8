//! Seeded random instances and oracle cross-checks, shared by the test suites
//! and the `validate` CLI subcommand.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::alloc::{
    bandwidth_allocate, bcd_solve, min_share_for_rate, optimal_power, sum_rate_objective, BcdOptions, Clamp, Link,
    Medium, RateDemand,
};
use crate::association::{
    baseline_random, evaluate, exhaustive_assign, pair_energy, two_stage_assign, utility_table, RoundInputs,
};
use crate::attention::task_shapley;
use crate::channel::{channel_gain, ChannelParams, ComputeParams, Geometry, RadioModel};
use crate::fl::{Arch, Dataset};
use crate::lambert::lambert_w0;
use crate::oracle::{central_difference, grid_power, projected_gradient_sum_rate, shapley_permutations};
use crate::par;

/// Channel defaults used for synthetic solver instances.
pub fn instance_channel() -> ChannelParams {
    ChannelParams {
        alpha0: 1e-6,
        nu: 2.7,
        mu_nlos: 0.2,
        a_env: 9.61,
        b_env: 0.16,
        noise_psd: 10f64.powf(-174.0 / 10.0) * 1e-3,
        bandwidth_total: 10e6,
    }
}

pub fn instance_medium() -> Medium {
    let ch = instance_channel();
    Medium { bandwidth: ch.bandwidth_total, noise_psd: ch.noise_psd, energy_coeff: 1e-28, deadline: 3.0 }
}

/// Gain of a UAV at altitude `[100, 150]` m and horizontal offset up to
/// `reach` m from its EV.
fn random_gain(rng: &mut impl Rng, reach: f64) -> f64 {
    let r = rng.random_range(0.0..reach);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let geom = Geometry {
        uav_xy: vec![[r * phi.cos(), r * phi.sin()]],
        ev_xy: vec![[0.0, 0.0]],
        altitude: vec![rng.random_range(100.0..150.0)],
    };
    channel_gain(0, 0, &geom, &instance_channel()).expect("valid geometry")
}

/// A random link: K = 5 local iterations of 64-sample batches, CPU load
/// between 1e4 and 2e5 cycles/sample, payload between 1e5 and 2e6 bits.
pub fn random_link(rng: &mut impl Rng) -> Link {
    let cycles: f64 = rng.random_range(1e4..2e5);
    Link {
        work: 5.0 * 64.0 * cycles,
        bits: rng.random_range(1e5..2e6),
        gain: random_gain(rng, 500.0),
        f_max: 2e9,
        p_max: rng.random_range(0.2..1.0),
    }
}

/// `n` links and queue weights in `[0.1, 10]`, seeded.
pub fn random_alloc_instance(seed: u64, n: usize) -> (Vec<Link>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let links = (0..n).map(|_| random_link(&mut rng)).collect();
    let queues = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
    (links, queues)
}

/// `n` rate demands with fixed powers and compute times, seeded. About a
/// third of the UAVs get a heavy payload. Draws are repeated until each UAV
/// needs at most `1 / n` of the band to meet its deadline, so the instance is
/// always feasible.
pub fn random_rate_demands(seed: u64, n: usize) -> Vec<RateDemand> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let medium = instance_medium();
    let cap = 1.0 / n.max(1) as f64;
    (0..n)
        .map(|_| loop {
            let tight = rng.random_bool(0.3);
            let d = RateDemand {
                p: rng.random_range(0.05..1.0),
                gain: random_gain(&mut rng, 500.0),
                bits: if tight { rng.random_range(2e6..5e6) } else { rng.random_range(1e5..1e6) },
                window: rng.random_range(0.5..2.5),
            };
            let c = d.p * d.gain / (medium.bandwidth * medium.noise_psd);
            let rho = d.bits / (d.window * medium.bandwidth);
            if min_share_for_rate(c, rho).is_some_and(|g| g <= cap) {
                break d;
            }
        })
        .collect()
}

/// A random `n`-UAV, `m`-task radio model: EVs scattered over a 1 km square,
/// UAVs hovering at 100-150 m over the same area.
pub fn random_model(seed: u64, n: usize, m: usize) -> RadioModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| [rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)];
    let ev_xy = (0..m).map(|_| point(&mut rng)).collect();
    let uav_xy = (0..n).map(|_| point(&mut rng)).collect();
    let altitude = (0..n).map(|_| rng.random_range(100.0..150.0)).collect();
    let compute = ComputeParams {
        cycles_per_sample: (0..m).map(|_| (0..n).map(|_| rng.random_range(1e4..2e5)).collect()).collect(),
        local_iters: 5,
        batch_size: 64,
        energy_coeff: 1e-28,
        f_max: vec![2e9; n],
        p_max: (0..n).map(|_| rng.random_range(0.2..1.0)).collect(),
        payload_bits: (0..m).map(|_| rng.random_range(1e5..1e6)).collect(),
        round_deadline: 3.0,
        data_sizes: (0..n).map(|_| rng.random_range(100.0..1000.0f64).round()).collect(),
        full_batch: false,
    };
    RadioModel { channel: instance_channel(), geometry: Geometry { uav_xy, ev_xy, altitude }, compute }
}

/// A random association instance with `N <= 6` UAVs and `M <= 3` tasks:
/// model, queues (some empty), task weights, `V` and per-task minimums.
/// Models are redrawn until every UAV can serve at least one task on the
/// equal share `1/N`.
pub struct AssocInstance {
    pub model: RadioModel,
    pub queues: Vec<f64>,
    pub alpha: Vec<f64>,
    pub v: f64,
    pub min_per_task: Vec<usize>,
}

pub fn random_assoc_instance(seed: u64) -> AssocInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=3);
    let n = rng.random_range(m + 1..=6);
    let model = loop {
        let model = random_model(rng.random(), n, m);
        let gains = model.gain_matrix().expect("valid geometry");
        if (0..n).all(|u| (0..m).any(|t| pair_energy(&model, &gains, t, u).is_some())) {
            break model;
        }
    };
    let queues = (0..n).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..10.0) }).collect();
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let alpha = raw.iter().map(|a| a / sum).collect();
    let v = 10f64.powf(rng.random_range(-4.0..-1.0));
    let min_per_task = (0..m).map(|_| rng.random_range(0..=1)).collect();
    AssocInstance { model, queues, alpha, v, min_per_task }
}

/// Outcome of one oracle cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Worst residual seen, in the check's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Counts and secondary conditions, human-readable.
    pub detail: String,
}

/// Bandwidth shares against an accelerated projected-gradient oracle on
/// seeded `N = 10` instances: shares sum to one within `1e-6`, negated total
/// rate within `1e-4` relative, and each solve under 10 ms. `worst` is the largest
/// relative rate difference.
pub fn bandwidth_check(instances: usize) -> Check {
    let medium = instance_medium();
    let (mut worst, mut sum_err, mut slowest) = (0.0f64, 0.0f64, Duration::ZERO);
    let mut failures = 0;
    for seed in 0..instances as u64 {
        let demands = random_rate_demands(seed, 10);
        let start = Instant::now();
        let alloc = bandwidth_allocate(&demands, medium.bandwidth, medium.noise_psd);
        slowest = slowest.max(start.elapsed());
        let (Ok(alloc), Some((_, oracle))) =
            (alloc, projected_gradient_sum_rate(&demands, medium.bandwidth, medium.noise_psd, 1e-12))
        else {
            failures += 1;
            continue;
        };
        let ours = sum_rate_objective(&alloc.gamma, &demands, medium.bandwidth, medium.noise_psd);
        worst = worst.max((ours - oracle).abs() / oracle.abs());
        sum_err = sum_err.max((alloc.gamma.iter().sum::<f64>() - 1.0).abs());
    }
    let tolerance = 1e-4;
    Check {
        name: "bandwidth vs projected gradient",
        worst,
        tolerance,
        passed: failures == 0 && worst <= tolerance && sum_err <= 1e-6 && slowest < Duration::from_millis(10),
        detail: format!("{instances} instances, {failures} unsolved, |sum - 1| {sum_err:.1e}, slowest {slowest:?}"),
    }
}

/// Closed-form power against a `points`-point grid over `[p_min, p_max]` on
/// `interior` random instances with an interior optimum, and on `clamped`
/// instances drawn with tight power caps or heavy compute, which must report
/// the matching end of the interval and not lose to the grid. `worst` is the
/// largest relative energy the grid gains over the closed form.
pub fn power_check(interior: usize, clamped: usize, points: usize) -> Check {
    let medium = instance_medium();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut worst, mut seen, mut ends, mut off_boundary) = (0.0f64, 0, [0usize; 2], 0);
    let mut draws = 0;
    while (seen < interior || ends[0] + ends[1] < clamped) && draws < 1000 * (interior + clamped).max(1) {
        draws += 1;
        let mut link = random_link(&mut rng);
        let mut gamma = rng.random_range(0.02..0.5);
        if draws % 2 == 0 {
            link.p_max *= 10f64.powf(rng.random_range(-3.0..0.0));
            link.work *= 10f64.powf(rng.random_range(0.0..2.0));
            link.f_max *= 10f64.powf(rng.random_range(-1.0..0.0));
            gamma = 10f64.powf(rng.random_range(-3.0..-0.3));
        }
        let Ok(pt) = optimal_power(&link, gamma, &medium) else { continue };
        let edge = match pt.clamp {
            Clamp::Interior if seen < interior => None,
            Clamp::AtMin if ends[0] + ends[1] < clamped => Some((0, pt.p_min)),
            Clamp::AtMax if ends[0] + ends[1] < clamped => Some((1, link.p_max)),
            _ => continue,
        };
        let (_, best) = grid_power(&link, gamma, &medium, pt.p_min, link.p_max, points);
        let gain = (pt.energy() - best) / pt.energy();
        worst = worst.max(gain);
        match edge {
            None => seen += 1,
            Some((k, p)) => {
                ends[k] += 1;
                off_boundary += usize::from(pt.p != p);
            }
        }
    }
    let tolerance = 1e-4;
    Check {
        name: "power vs grid search",
        worst,
        tolerance,
        passed: seen == interior && ends[0] + ends[1] == clamped && worst <= tolerance && off_boundary == 0,
        detail: format!(
            "{seen} interior, {} at p_min, {} at p_max ({off_boundary} off their boundary), {points} grid points",
            ends[0], ends[1]
        ),
    }
}

/// BCD on seeded `N = 10` instances: the objective never rises between
/// iterations and the relative change drops below `1e-6` within 50
/// iterations on at least 95% of them. `worst` is the largest relative rise.
pub fn bcd_check(instances: usize) -> Check {
    let medium = instance_medium();
    let opts = BcdOptions { max_iters: 50, rel_tol: 1e-6, abs_tol: 1e-12 };
    let runs = par::map_range(instances, |k| {
        let (links, queues) = random_alloc_instance(k as u64, 10);
        bcd_solve(&links, &queues, &medium, &opts).ok()
    });
    let (mut worst, mut converged, mut infeasible) = (0.0f64, 0, 0);
    for run in &runs {
        let Some(sol) = run else {
            infeasible += 1;
            continue;
        };
        let scale = sol.trace[0].abs().max(1e-300);
        for w in sol.trace.windows(2) {
            worst = worst.max((w[1] - w[0]) / scale);
        }
        converged += usize::from(sol.converged);
    }
    let tolerance = 1e-12;
    Check {
        name: "bcd monotone descent",
        worst,
        tolerance,
        passed: infeasible == 0 && worst <= tolerance && converged * 100 >= 95 * instances,
        detail: format!("{instances} instances, {converged} converged within 50 iterations, {infeasible} infeasible"),
    }
}

/// Two-stage association against exhaustive search and a random baseline on
/// seeded instances with `N <= 6`, `M <= 3`: always feasible, never better
/// than the exhaustive optimum, median relative gap at most 5%, and strictly
/// better than random on at least 90%. `worst` is the median gap.
pub fn association_check(instances: usize) -> Check {
    let opts = BcdOptions::default();
    let rows = par::map_range(instances, |k| -> Option<(f64, bool)> {
        let inst = random_assoc_instance(k as u64);
        let gains = inst.model.gain_matrix().ok()?;
        let inputs = RoundInputs {
            model: &inst.model,
            gains: &gains,
            queues: &inst.queues,
            alpha: &inst.alpha,
            data: &inst.model.compute.data_sizes,
            v: inst.v,
            min_per_task: &inst.min_per_task,
        };
        let table = utility_table(&inputs);
        let ours = two_stage_assign(&table, inst.queues.as_slice(), &inst.alpha, &inst.min_per_task).ok()?;
        let ours = evaluate(&inputs, &ours.assignment, &opts).ok()?.objective;
        let (best, _) = exhaustive_assign(&inputs, &opts).ok()?;
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64 ^ 0xa55a);
        let random = baseline_random(&table, &inst.min_per_task, &mut rng).ok()?;
        let random = evaluate(&inputs, &random.assignment, &opts).map_or(f64::INFINITY, |e| e.objective);
        Some(((ours - best.objective) / best.objective.abs().max(1e-300), ours < random))
    });
    let infeasible = rows.iter().filter(|r| r.is_none()).count();
    let mut gaps: Vec<f64> = rows.iter().flatten().map(|r| r.0).collect();
    let beats = rows.iter().flatten().filter(|r| r.1).count();
    gaps.sort_by(f64::total_cmp);
    let median = gaps.get(gaps.len() / 2).copied().unwrap_or(f64::INFINITY);
    let negative = gaps.first().is_some_and(|&g| g < -1e-9);
    let tolerance = 0.05;
    Check {
        name: "association vs exhaustive",
        worst: median,
        tolerance,
        passed: infeasible == 0 && !negative && median <= tolerance && beats * 10 >= 9 * instances,
        detail: format!(
            "{instances} instances, {infeasible} infeasible, min gap {:.2e}, beats random on {beats}",
            gaps.first().copied().unwrap_or(f64::NAN)
        ),
    }
}

/// Task Shapley values against permutation enumeration on `games` random
/// game sets with 2 to 4 tasks, plus the efficiency and null-player axioms.
pub fn shapley_check(games: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5a9);
    let mut worst = 0.0f64;
    for _ in 0..games {
        let m = rng.random_range(2..=4);
        let null = rng.random_range(0..m);
        let mut set: Vec<Vec<f64>> =
            (0..m).map(|_| (0..1usize << m).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let phi = task_shapley(&set).expect("within the exact limit");
        let brute = shapley_permutations(&set, m);
        worst = worst.max(phi.iter().zip(&brute).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let grand = (1usize << m) - 1;
        let surplus = set.iter().map(|g| g[grand] - g[0]).sum::<f64>() / m as f64;
        worst = worst.max((phi.iter().sum::<f64>() - surplus).abs());

        // Copy every coalition's value onto the same coalition plus `null`.
        for g in &mut set {
            for mask in (0..1usize << m).filter(|s| s & (1 << null) == 0) {
                g[mask | 1 << null] = g[mask];
            }
        }
        worst = worst.max(task_shapley(&set).expect("within the exact limit")[null].abs());
    }
    let tolerance = 1e-10;
    Check {
        name: "shapley exactness and axioms",
        worst,
        tolerance,
        passed: worst <= tolerance,
        detail: format!("{games} game sets, 2-4 tasks"),
    }
}

/// `|w e^w - x| / max(1, |x|)` over `samples` uniform arguments in
/// `(-1/e, 10)`, plus a cluster just above the branch point.
pub fn lambert_check(samples: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a3b);
    let lo = -(-1.0f64).exp();
    let near = samples / 10;
    let mut worst = 0.0f64;
    let mut errors = 0;
    for k in 0..samples {
        let x = if k < near { lo + 10f64.powf(rng.random_range(-15.0..-1.0)) } else { rng.random_range(lo..10.0) };
        if x <= lo {
            continue;
        }
        match lambert_w0(x) {
            Ok(w) => worst = worst.max((w * w.exp() - x).abs() / x.abs().max(1.0)),
            Err(_) => errors += 1,
        }
    }
    let tolerance = 1e-12;
    Check {
        name: "lambert w residual",
        worst,
        tolerance,
        passed: errors == 0 && worst <= tolerance,
        detail: format!("{samples} arguments, {errors} errors"),
    }
}

/// Backprop against central differences on `coords` random parameters,
/// split between extractor and head. `worst` is the largest relative error
/// `|a - f| / max(|a|, |f|, 1e-6)`.
pub fn gradient_check(coords: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9d);
    let arch = Arch { input: 12, hidden: vec![16, 6], classes: 4 };
    let (ext, head) = arch.init(&mut rng);
    let rows = 16;
    let data = Dataset {
        dim: arch.input,
        x: (0..rows * arch.input).map(|_| rng.sample(StandardNormal)).collect(),
        y: (0..rows).map(|_| rng.random_range(0..arch.classes)).collect(),
    };
    let mut g_ext = vec![0.0; arch.extractor_len()];
    let mut g_head = vec![0.0; arch.head_len()];
    arch.loss_and_grad(&ext, &head, &data, &mut g_ext, &mut g_head);
    let ne = ext.len();
    let joined: Vec<f64> = ext.iter().chain(&head).copied().collect();
    let loss = |p: &[f64]| arch.evaluate(&p[..ne], &p[ne..], &data).loss;
    let mut worst = 0.0f64;
    for k in 0..coords {
        let i = if k % 2 == 0 { rng.random_range(0..ne) } else { ne + rng.random_range(0..head.len()) };
        let fd = central_difference(loss, &joined, i, 1e-5);
        let an = if i < ne { g_ext[i] } else { g_head[i - ne] };
        worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-6));
    }
    let tolerance = 1e-4;
    Check {
        name: "backprop vs finite differences",
        worst,
        tolerance,
        passed: worst <= tolerance,
        detail: format!("{coords} coordinates over extractor and head"),
    }
}

/// Every solver-level check at its full size.
pub fn run_all() -> Vec<Check> {
    vec![
        bandwidth_check(20),
        power_check(50, 20, 100_000),
        bcd_check(100),
        association_check(200),
        shapley_check(100),
        lambert_check(10_000),
        gradient_check(50),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_checks_pass() {
        for check in [bandwidth_check(3), power_check(5, 4, 2000), bcd_check(5), shapley_check(10), lambert_check(500), gradient_check(10)] {
            assert!(check.passed, "{check:?}");
        }
    }

    #[test]
    fn assoc_instances_are_seeded() {
        let a = random_assoc_instance(7);
        let b = random_assoc_instance(7);
        assert_eq!(a.queues, b.queues);
        assert_eq!(a.model.geometry.uav_xy, b.model.geometry.uav_xy);
    }
}
