//! Slow, structure-agnostic reference solvers used to cross-check the fast
//! paths. None of these share code with the solvers they check beyond the
//! plain data types.

use std::f64::consts::LN_2;

use crate::alloc::{Link, Medium, RateDemand};

/// `gamma log2(1 + c / gamma)` written out directly.
fn spectral_rate(gamma: f64, c: f64) -> f64 {
    gamma * (1.0 + c / gamma).log2()
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = total}`.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - total) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Smallest share reaching spectral rate `rho`, by 200 plain halvings.
fn rate_floor(c: f64, rho: f64) -> Option<f64> {
    if spectral_rate(1.0, c) < rho {
        return None;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid > 0.0 && spectral_rate(mid, c) >= rho {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Accelerated projected gradient (FISTA with backtracking and restarts) on
/// the negated sum rate, over `{gamma >= deadline floor, sum gamma = 1}`.
/// Returns the shares and the objective `-sum gamma B log2(1 + c/gamma)`.
pub fn projected_gradient_sum_rate(
    demands: &[RateDemand],
    bandwidth: f64,
    noise_psd: f64,
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let n = demands.len();
    let c: Vec<f64> = demands.iter().map(|d| d.p * d.gain / (bandwidth * noise_psd)).collect();
    let floor: Vec<f64> = demands
        .iter()
        .zip(&c)
        .map(|(d, &ci)| rate_floor(ci, d.bits / (d.window * bandwidth)))
        .collect::<Option<_>>()?;
    let spare = 1.0 - floor.iter().sum::<f64>();
    if spare < 0.0 {
        return None;
    }
    let value = |g: &[f64]| -> f64 { -g.iter().zip(&c).map(|(&gi, &ci)| spectral_rate(gi, ci)).sum::<f64>() };
    let grad = |g: &[f64]| -> Vec<f64> {
        g.iter()
            .zip(&c)
            .map(|(&gi, &ci)| {
                let a = ci / gi;
                -((1.0 + a).log2() - a / ((1.0 + a) * LN_2))
            })
            .collect()
    };
    let project = |y: &[f64]| -> Vec<f64> {
        let shifted: Vec<f64> = y.iter().zip(&floor).map(|(a, b)| a - b).collect();
        project_simplex(&shifted, spare).iter().zip(&floor).map(|(a, b)| a + b).collect()
    };

    let mut x: Vec<f64> = project(&vec![1.0 / n as f64; n]);
    // Keep iterates off the boundary gamma = 0 where the gradient blows up.
    let eps = 1e-14;
    x.iter_mut().for_each(|v| *v = v.max(eps));
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut step = 1e-3;
    let mut fx = value(&x);
    for _ in 0..200_000 {
        let gy = grad(&y);
        let fy = value(&y);
        let mut next;
        loop {
            let trial: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
            next = project(&trial);
            next.iter_mut().for_each(|v| *v = v.max(eps));
            let d: Vec<f64> = next.iter().zip(&y).map(|(a, b)| a - b).collect();
            let quad = fy + d.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>()
                + d.iter().map(|a| a * a).sum::<f64>() / (2.0 * step);
            if value(&next) <= quad + 1e-15 * fy.abs() {
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return None;
            }
        }
        let f_next = value(&next);
        let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        if f_next > fx {
            // Adaptive restart.
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        // Extrapolation can leave the domain gamma > 0; pull it back.
        y = next.iter().zip(&x).map(|(a, b)| (a + (t - 1.0) / t_next * (a - b)).max(eps)).collect();
        t = t_next;
        x = next;
        fx = f_next;
        step *= 1.5;
        if moved <= tol {
            break;
        }
    }
    Some((x, bandwidth * fx))
}

/// Round energy at power `p`, composed directly from the channel and CPU
/// laws: uplink time from the rate, frequency from the remaining time.
pub fn energy_direct(link: &Link, gamma: f64, p: f64, medium: &Medium) -> f64 {
    let snr = p * link.gain / (gamma * medium.bandwidth * medium.noise_psd);
    let r = gamma * medium.bandwidth * (1.0 + snr).log2();
    let t_comm = link.bits / r;
    let f = link.work / (medium.deadline - t_comm);
    if !(f > 0.0) || f > link.f_max * (1.0 + 1e-12) {
        return f64::INFINITY;
    }
    medium.energy_coeff * link.work * f * f + p * t_comm
}

/// Best energy over `points` evenly spaced powers in `[p_lo, p_hi]`.
pub fn grid_power(link: &Link, gamma: f64, medium: &Medium, p_lo: f64, p_hi: f64, points: usize) -> (f64, f64) {
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 0..points {
        let p = p_lo + (p_hi - p_lo) * i as f64 / (points - 1) as f64;
        let e = energy_direct(link, gamma, p, medium);
        if e < best.1 {
            best = (p, e);
        }
    }
    best
}

/// Minimum of `f` by BFGS with a central-difference gradient and
/// backtracking line search.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], max_iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let grad = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let h = 1e-6 * x[i].abs().max(1.0);
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    };
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut hinv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..max_iters {
        let d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>()).collect();
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let (d, slope) = if slope < 0.0 { (d, slope) } else { (g.iter().map(|v| -v).collect(), -g.iter().map(|v| v * v).sum::<f64>()) };
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-20 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let fnew = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let gn = grad(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let improve = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if improve.abs() <= 1e-15 * fx.abs().max(1e-300) {
            break;
        }
    }
    (x, fx)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Joint minimum of `sum_n Q_n E_n` over shares, uplink times and (through
/// them) powers and frequencies, by BFGS on an unconstrained
/// reparametrization of the feasible set: shares as a softmax and each uplink
/// time as a sigmoid between its full-power time and the full-speed CPU cap.
pub fn joint_allocation(links: &[Link], queues: &[f64], medium: &Medium) -> f64 {
    let n = links.len();
    let map = |z: &[f64]| -> Option<f64> {
        let mut logits = vec![0.0; n];
        logits[..n - 1].copy_from_slice(&z[..n - 1]);
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let sum: f64 = w.iter().sum();
        let mut total = 0.0;
        for i in 0..n {
            let gamma = w[i] / sum;
            let l = &links[i];
            let band = gamma * medium.bandwidth;
            let t_fast = l.bits / (band * (1.0 + l.p_max * l.gain / (band * medium.noise_psd)).log2());
            let t_cap = medium.deadline - l.work / l.f_max;
            if !(t_fast < t_cap) {
                return None;
            }
            let tau = t_fast + (t_cap - t_fast) * sigmoid(z[n - 1 + i]);
            let p = band * medium.noise_psd / l.gain * (2f64.powf(l.bits / (band * tau)) - 1.0);
            let f = l.work / (medium.deadline - tau);
            total += queues[i] * (medium.energy_coeff * l.work * f * f + p * tau);
        }
        Some(total)
    };
    let z0 = vec![0.0; 2 * n - 1];
    let scale = map(&z0).unwrap_or(1.0).abs().max(1e-300);
    let (z, _) = bfgs(|z| map(z).map_or(f64::INFINITY, |v| v / scale), &z0, 5000);
    map(&z).unwrap_or(f64::INFINITY)
}

/// `W0(x)` by 200 halvings of `[-1, max(1, x)]`.
pub fn lambert_bisect(x: f64) -> f64 {
    let (mut lo, mut hi) = (-1.0f64, x.max(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Shapley values averaged over several games by enumerating every player
/// order. `games[m][mask]` is game `m`'s value of coalition `mask`.
pub fn shapley_permutations(games: &[Vec<f64>], players: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..players).collect();
    let mut phi = vec![0.0; players];
    let mut count = 0usize;
    loop {
        for game in games {
            let mut mask = 0usize;
            for &i in &order {
                let with = mask | (1 << i);
                phi[i] += game[with] - game[mask];
                mask = with;
            }
        }
        count += 1;
        if !next_permutation(&mut order) {
            break;
        }
    }
    let denom = (count * games.len()) as f64;
    phi.iter().map(|v| v / denom).collect()
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Central finite difference of `f` along coordinate `i`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}
