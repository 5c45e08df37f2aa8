//! UAV-to-EV association: the two-stage heuristic (greedy by per-pair
//! utility, then cheapest transfers until every task has its minimum), an
//! exhaustive search for small instances, and the baseline rules.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::alloc::{bcd_solve, link_for, links_for, optimal_power, AllocSolution, BcdOptions, Medium};
use crate::channel::RadioModel;
use crate::error::{Error, Infeasibility, Result};
use crate::lyapunov::dpp_objective;
use crate::par;

/// Largest `M^N` the exhaustive search will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 1_000_000;

/// Relative slack under which two exhaustive candidates count as tied.
const TIE_RTOL: f64 = 1e-12;

/// Binary association `beta`, stored as the task index of each UAV so that
/// "one EV per UAV" holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssociationMatrix {
    pub assignment: Vec<usize>,
    pub num_tasks: usize,
}

impl AssociationMatrix {
    pub fn new(assignment: Vec<usize>, num_tasks: usize) -> Self {
        debug_assert!(assignment.iter().all(|&m| m < num_tasks));
        AssociationMatrix { assignment, num_tasks }
    }

    /// `beta[m][n]` as 0/1.
    pub fn beta(&self) -> Vec<Vec<u8>> {
        let mut b = vec![vec![0u8; self.assignment.len()]; self.num_tasks];
        for (n, &m) in self.assignment.iter().enumerate() {
            b[m][n] = 1;
        }
        b
    }

    /// Number of UAVs serving each task.
    pub fn row_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_tasks];
        for &m in &self.assignment {
            c[m] += 1;
        }
        c
    }

    pub fn meets_minimums(&self, min_per_task: &[usize]) -> bool {
        self.row_counts().iter().zip(min_per_task).all(|(c, d)| c >= d)
    }
}

/// Per-UAV, per-EV utilities `J[n][m]` (lower is better, `+inf` when the
/// pairing cannot meet the deadline).
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    pub j: Vec<Vec<f64>>,
}

impl UtilityTable {
    pub fn num_uavs(&self) -> usize {
        self.j.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.j.first().map_or(0, Vec::len)
    }

    /// Sum of the table entries picked by `assignment`.
    pub fn total(&self, assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(n, &m)| self.j[n][m]).sum()
    }
}

/// Everything the association step needs to price a decision.
#[derive(Debug, Clone, Copy)]
pub struct RoundInputs<'a> {
    pub model: &'a RadioModel,
    /// Gains indexed `[task][uav]`.
    pub gains: &'a [Vec<f64>],
    pub queues: &'a [f64],
    pub alpha: &'a [f64],
    /// Per-UAV data weight `D_n` in the utility.
    pub data: &'a [f64],
    pub v: f64,
    pub min_per_task: &'a [usize],
}

/// Energy of `uav` serving `task` alone on the equal share `1/N`, at its
/// optimal power and frequency. `None` when the pair is infeasible.
pub fn pair_energy(model: &RadioModel, gains: &[Vec<f64>], task: usize, uav: usize) -> Option<f64> {
    let share = 1.0 / model.num_uavs() as f64;
    let link = link_for(model, gains, task, uav);
    optimal_power(&link, share, &Medium::from_model(model)).ok().map(|pt| pt.energy())
}

/// `J[n][m] = Q_n E_n(p*, f*) - V alpha_m D_n` at the equal share `1/N`.
pub fn utility_table(inputs: &RoundInputs) -> UtilityTable {
    let (n, m) = (inputs.model.num_uavs(), inputs.model.num_tasks());
    let flat = par::map_range(n * m, |k| {
        let (uav, task) = (k / m, k % m);
        match pair_energy(inputs.model, inputs.gains, task, uav) {
            Some(e) => inputs.queues[uav] * e - inputs.v * inputs.alpha[task] * inputs.data[uav],
            None => f64::INFINITY,
        }
    });
    UtilityTable { j: flat.chunks(m).map(<[f64]>::to_vec).collect() }
}

/// Index of the smallest finite entry, lowest index on ties.
fn argmin(row: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in row.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v < row[b]) {
            best = Some(i);
        }
    }
    best
}

/// Stage one: each UAV takes its cheapest EV. UAVs with an empty queue go to
/// the feasible task with the largest weight.
fn greedy_stage(table: &UtilityTable, queues: &[f64], alpha: &[f64]) -> Result<Vec<usize>> {
    (0..table.num_uavs())
        .map(|n| {
            let row = &table.j[n];
            let pick = if queues[n] == 0.0 {
                let neg_alpha: Vec<f64> =
                    alpha.iter().zip(row).map(|(a, j)| if j.is_finite() { -a } else { f64::INFINITY }).collect();
                argmin(&neg_alpha)
            } else {
                argmin(row)
            };
            pick.ok_or_else(|| Error::InfeasibleRound {
                round: 0,
                reason: Infeasibility::Association(format!("uav {n} cannot serve any task")),
            })
        })
        .collect()
}

/// Stage two: while some task is below its minimum, execute the globally
/// cheapest transfer `J[n][j] - J[n][i]` of a UAV `n` from a task `i` above
/// its minimum to a task `j` below it. A moved UAV is not moved again. Ties
/// go to the lowest `(uav, target)`.
pub fn repair_minimums(table: &UtilityTable, mut assignment: Vec<usize>, min_per_task: &[usize]) -> Result<Vec<usize>> {
    let m = table.num_tasks();
    let mut counts = vec![0usize; m];
    for &t in &assignment {
        counts[t] += 1;
    }
    let mut moved = vec![false; assignment.len()];
    loop {
        if counts.iter().zip(min_per_task).all(|(c, d)| c >= d) {
            return Ok(assignment);
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (n, &i) in assignment.iter().enumerate() {
            if moved[n] || counts[i] <= min_per_task[i] {
                continue;
            }
            for j in 0..m {
                if counts[j] >= min_per_task[j] || !table.j[n][j].is_finite() {
                    continue;
                }
                let delta = table.j[n][j] - table.j[n][i];
                // Strict comparison keeps the first (lowest uav, target) on ties.
                if best.is_none_or(|(d, _, _)| delta < d) {
                    best = Some((delta, n, j));
                }
            }
        }
        let Some((_, n, j)) = best else {
            return Err(Error::InfeasibleRound {
                round: 0,
                reason: Infeasibility::Association("no transfer can satisfy the per-task minimums".into()),
            });
        };
        counts[assignment[n]] -= 1;
        counts[j] += 1;
        assignment[n] = j;
        moved[n] = true;
    }
}

/// The two-stage heuristic on a precomputed utility table.
pub fn two_stage_assign(
    table: &UtilityTable,
    queues: &[f64],
    alpha: &[f64],
    min_per_task: &[usize],
) -> Result<AssociationMatrix> {
    check_minimums(table.num_uavs(), min_per_task)?;
    let first = greedy_stage(table, queues, alpha)?;
    let assignment = repair_minimums(table, first, min_per_task)?;
    Ok(AssociationMatrix::new(assignment, table.num_tasks()))
}

fn check_minimums(n: usize, min_per_task: &[usize]) -> Result<()> {
    let need: usize = min_per_task.iter().sum();
    if need > n {
        return Err(Error::Config(format!("per-task minimums need {need} uavs, only {n} available")));
    }
    Ok(())
}

/// A priced association: the allocation BCD found for it and its
/// drift-plus-penalty value.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub association: AssociationMatrix,
    pub alloc: AllocSolution,
    pub objective: f64,
}

/// Runs BCD on `assignment` and returns the drift-plus-penalty value of the
/// result.
pub fn evaluate(inputs: &RoundInputs, assignment: &[usize], opts: &BcdOptions) -> std::result::Result<Evaluated, Infeasibility> {
    let links = links_for(inputs.model, inputs.gains, assignment);
    let alloc = bcd_solve(&links, inputs.queues, &Medium::from_model(inputs.model), opts)?;
    let objective =
        dpp_objective(inputs.queues, &alloc.energies(), inputs.v, inputs.alpha, assignment, inputs.data);
    Ok(Evaluated { association: AssociationMatrix::new(assignment.to_vec(), inputs.model.num_tasks()), alloc, objective })
}

/// Decodes the `k`-th assignment in lexicographic order (UAV 0 most
/// significant).
fn decode(mut k: usize, n: usize, m: usize) -> Vec<usize> {
    let mut a = vec![0; n];
    for slot in a.iter_mut().rev() {
        *slot = k % m;
        k /= m;
    }
    a
}

/// Number of candidates the exhaustive search would enumerate, or `None` on
/// overflow.
pub fn search_space(n: usize, m: usize) -> Option<usize> {
    (0..n).try_fold(1usize, |acc, _| acc.checked_mul(m))
}

/// Enumerates every association meeting the per-task minimums, prices each
/// with full BCD and returns the best. Ties go to the lexicographically
/// smallest assignment. Also reports how many feasible candidates were priced.
pub fn exhaustive_assign(inputs: &RoundInputs, opts: &BcdOptions) -> Result<(Evaluated, usize)> {
    let (n, m) = (inputs.model.num_uavs(), inputs.model.num_tasks());
    check_minimums(n, inputs.min_per_task)?;
    let total = search_space(n, m).filter(|&s| s <= EXHAUSTIVE_LIMIT).ok_or_else(|| {
        Error::Guard(format!("{m}^{n} associations exceed the exhaustive limit of {EXHAUSTIVE_LIMIT}"))
    })?;
    let priced = par::map_range(total, |k| {
        let a = decode(k, n, m);
        let assoc = AssociationMatrix::new(a, m);
        if !assoc.meets_minimums(inputs.min_per_task) {
            return None;
        }
        Some(evaluate(inputs, &assoc.assignment, opts).ok())
    });
    let candidates = priced.iter().filter(|p| p.is_some()).count();
    let mut best: Option<Evaluated> = None;
    for e in priced.into_iter().flatten().flatten() {
        let better = match &best {
            None => true,
            Some(b) => e.objective < b.objective - TIE_RTOL * b.objective.abs().max(1e-300),
        };
        if better {
            best = Some(e);
        }
    }
    let best = best.ok_or_else(|| Error::InfeasibleRound {
        round: 0,
        reason: Infeasibility::Association("no feasible association".into()),
    })?;
    Ok((best, candidates))
}

/// Scores that mark infeasible pairings of `table` as `+inf` on top of `score`.
fn masked(table: &UtilityTable, score: impl Fn(usize, usize) -> f64) -> UtilityTable {
    let j = table
        .j
        .iter()
        .enumerate()
        .map(|(n, row)| row.iter().enumerate().map(|(m, v)| if v.is_finite() { score(n, m) } else { f64::INFINITY }).collect())
        .collect();
    UtilityTable { j }
}

/// Baseline: each UAV joins the task it has gone longest without serving
/// (`aou[n][m]`), lowest task on ties, then the same minimum repair as the
/// heuristic with `-AoU` as the transfer cost.
pub fn baseline_aou(feasible: &UtilityTable, aou: &[Vec<u64>], min_per_task: &[usize]) -> Result<AssociationMatrix> {
    let scores = masked(feasible, |n, m| -(aou[n][m] as f64));
    let ones = vec![1.0; scores.num_uavs()];
    let first = greedy_stage(&scores, &ones, &[])?;
    let a = repair_minimums(&scores, first, min_per_task)?;
    Ok(AssociationMatrix::new(a, feasible.num_tasks()))
}

/// Advances the age-of-update counters after a round with `assignment`.
pub fn advance_aou(aou: &mut [Vec<u64>], assignment: &[usize]) {
    for (row, &served) in aou.iter_mut().zip(assignment) {
        for (m, age) in row.iter_mut().enumerate() {
            *age = if m == served { 0 } else { *age + 1 };
        }
    }
}

/// Baseline: each UAV joins the EV with the strongest channel (`gains` is
/// `[task][uav]`), then the minimum repair with `-gain` as the cost.
pub fn baseline_channel_aware(
    feasible: &UtilityTable,
    gains: &[Vec<f64>],
    min_per_task: &[usize],
) -> Result<AssociationMatrix> {
    let scores = masked(feasible, |n, m| -gains[m][n]);
    let ones = vec![1.0; scores.num_uavs()];
    let first = greedy_stage(&scores, &ones, &[])?;
    let a = repair_minimums(&scores, first, min_per_task)?;
    Ok(AssociationMatrix::new(a, feasible.num_tasks()))
}

/// Baseline: uniformly random feasible EV per UAV, then the minimum repair
/// with random transfer costs.
pub fn baseline_random(feasible: &UtilityTable, min_per_task: &[usize], rng: &mut impl Rng) -> Result<AssociationMatrix> {
    let m = feasible.num_tasks();
    let first = feasible
        .j
        .iter()
        .enumerate()
        .map(|(n, row)| {
            let options: Vec<usize> = (0..m).filter(|&t| row[t].is_finite()).collect();
            options.choose(rng).copied().ok_or_else(|| Error::InfeasibleRound {
                round: 0,
                reason: Infeasibility::Association(format!("uav {n} cannot serve any task")),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let noise: Vec<Vec<f64>> = (0..feasible.num_uavs()).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    let scores = masked(feasible, |n, t| noise[n][t]);
    let a = repair_minimums(&scores, first, min_per_task)?;
    Ok(AssociationMatrix::new(a, m))
}
