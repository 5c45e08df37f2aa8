//! Full simulation runs: scenario construction, the round loop, baselines,
//! metrics and V sweeps.
//!
//! One round, in order:
//! 1. task weights `alpha` from the end of the previous round;
//! 2. association per strategy, priced by BCD (with a fallback search on
//!    infeasible rounds);
//! 3. constraint audit of the committed decision;
//! 4. local training of every UAV on its assigned task (parallel);
//! 5. virtual-queue update with the realized energies;
//! 6. head aggregation, per-task extractor gradients, and cross gradients
//!    (each task's UAVs retrained from every other task's extractor);
//! 7. every coalition probe on the validation splits, which yields the
//!    affinity, the share sets and the Shapley games;
//! 8. extractor aggregation through the share sets;
//! 9. evaluation and the attention update for the next round.

pub mod config;
pub mod report;
pub mod units;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{AssociationStrategy, ScenarioConfig, SharingStrategy, StrategySelector};
pub use report::{write_summaries, RoundRecord, RunSummary, TaskRound, TrainingReport, UavRound};

use crate::affinity::{affinity_round, AffinityState};
use crate::alloc::BcdOptions;
use crate::association::{
    advance_aou, baseline_aou, baseline_channel_aware, baseline_random, evaluate, exhaustive_assign, search_space,
    two_stage_assign, utility_table, Evaluated, RoundInputs,
};
use crate::attention::{task_shapley, AttentionState};
use crate::channel::{ChannelParams, ComputeParams, Geometry, RadioModel, UavDecision};
use crate::error::{Error, Result};
use crate::fl::engine::{accuracy_games, stream_seed, task_gradients};
use crate::fl::{generate_suite, Arch, ModelBundle, SyntheticTaskSuite, TrainConfig};
use crate::lyapunov::{drift_bound_constant, energy_bound_check, utility, VirtualQueueState};
use crate::par;

/// Purposes for derived random streams.
mod stream {
    pub const GEOMETRY: u64 = 1;
    pub const DATA: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const ASSOCIATION: u64 = 5;
}

/// Relative slack when re-checking committed decisions.
const AUDIT_RTOL: f64 = 1e-9;

/// Everything static about a run.
#[derive(Debug, Clone)]
pub struct World {
    pub config: ScenarioConfig,
    pub model: RadioModel,
    /// `[task][uav]`.
    pub gains: Vec<Vec<f64>>,
    pub suite: SyntheticTaskSuite,
    pub arch: Arch,
    /// Utility data weights: each UAV's share of all samples, so the
    /// utility is unitless and `V` reads in joules.
    pub data_share: Vec<f64>,
}

impl World {
    pub fn build(cfg: &ScenarioConfig) -> Result<World> {
        cfg.validate()?;
        let (n, m) = (cfg.swarm.num_uavs, cfg.num_tasks());
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 0, 0, stream::GEOMETRY));
        let area = cfg.swarm.area;
        let mut span = |[lo, hi]: [f64; 2]| if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let uav_xy: Vec<[f64; 2]> = (0..n).map(|_| [span([0.0, area]), span([0.0, area])]).collect();
        let altitude: Vec<f64> = (0..n).map(|_| span(cfg.swarm.altitude)).collect();
        let p_max: Vec<f64> = (0..n).map(|_| span(cfg.energy.p_max)).collect();
        let f_max: Vec<f64> = (0..n).map(|_| span(cfg.energy.f_max)).collect();
        let ev_xy = match &cfg.swarm.ev_xy {
            Some(v) => v.clone(),
            None => (0..m).map(|_| [span([0.0, area]), span([0.0, area])]).collect(),
        };

        let suite = generate_suite(&cfg.suite(), stream_seed(cfg.seed, 0, 0, stream::DATA))?;
        let arch = Arch { input: cfg.tasks.input_dim, hidden: cfg.learning.hidden.clone(), classes: cfg.tasks.classes };
        arch.validate()?;
        let cycles = arch.train_flops_per_sample() * cfg.energy.cycles_per_flop;
        let payload = cfg.energy.bits_per_param * arch.param_count() as f64;

        let r = &cfg.radio;
        let model = RadioModel {
            channel: ChannelParams {
                alpha0: r.alpha0,
                nu: r.path_loss_exponent,
                mu_nlos: r.mu_nlos,
                a_env: r.a_env,
                b_env: r.b_env,
                noise_psd: r.noise_psd,
                bandwidth_total: r.bandwidth,
            },
            geometry: Geometry { uav_xy, ev_xy, altitude },
            compute: ComputeParams {
                cycles_per_sample: vec![vec![cycles; n]; m],
                local_iters: cfg.learning.local_iters,
                batch_size: cfg.learning.batch_size,
                energy_coeff: cfg.energy.energy_coeff,
                f_max,
                p_max,
                payload_bits: vec![payload; m],
                round_deadline: cfg.energy.deadline,
                data_sizes: suite.sizes.iter().map(|&s| s as f64).collect(),
                full_batch: cfg.learning.full_batch,
            },
        };
        model.validate()?;
        let gains = model.gain_matrix()?;
        let total: f64 = model.compute.data_sizes.iter().sum();
        let data_share = model.compute.data_sizes.iter().map(|d| d / total).collect();
        Ok(World { config: cfg.clone(), model, gains, suite, arch, data_share })
    }

    pub fn initial_models(&self) -> Result<ModelBundle> {
        let l = &self.config.learning;
        let train =
            TrainConfig { lr: l.lr, local_iters: l.local_iters, batch_size: l.batch_size, full_batch: l.full_batch };
        ModelBundle::new(self.arch.clone(), self.config.num_tasks(), train, stream_seed(self.config.seed, 0, 0, stream::INIT))
    }

    /// Per-UAV energy budget over the horizon.
    pub fn energy_budgets(&self) -> Vec<f64> {
        vec![self.config.energy.e_max; self.model.num_uavs()]
    }
}

/// Upper proxy for the best achievable weighted utility in one round:
/// for each task, all data except the smallest shards needed to staff the
/// other tasks' minimums, weighted by `alpha` and summed over tasks.
pub fn utility_proxy(alpha: &[f64], data_sizes: &[f64], min_per_task: &[usize]) -> f64 {
    let mut sorted = data_sizes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = data_sizes.iter().sum();
    let need: usize = min_per_task.iter().sum();
    alpha
        .iter()
        .zip(min_per_task)
        .map(|(a, &own)| {
            let others = need - own;
            a * (total - sorted[..others].iter().sum::<f64>())
        })
        .sum()
}

/// Re-derives the committed decision's costs from scratch and checks every
/// per-round constraint.
pub fn audit_decision(
    model: &RadioModel,
    chosen: &Evaluated,
    min_per_task: &[usize],
    round: usize,
) -> Result<Vec<UavDecision>> {
    let violation = |detail: String| Error::ConstraintViolation { round, detail };
    let a = &chosen.association;
    let alloc = &chosen.alloc;
    let n = model.num_uavs();
    if a.assignment.len() != n || a.assignment.iter().any(|&t| t >= model.num_tasks()) {
        return Err(violation("every uav must serve exactly one known task".into()));
    }
    if !a.meets_minimums(min_per_task) {
        return Err(violation(format!("task staffing {:?} below minimums {min_per_task:?}", a.row_counts())));
    }
    let share: f64 = alloc.gamma.iter().sum();
    if (share - 1.0).abs() > AUDIT_RTOL || alloc.gamma.iter().any(|g| !(*g > 0.0)) {
        return Err(violation(format!("bandwidth shares sum to {share}")));
    }
    let decisions: Vec<UavDecision> = (0..n)
        .map(|u| UavDecision { task: a.assignment[u], p: alloc.p[u], f: alloc.f[u], gamma: alloc.gamma[u] })
        .collect();
    let costs = model.round_costs(&decisions).map_err(|e| violation(e.to_string()))?;
    for (u, c) in costs.iter().enumerate() {
        if !c.feasible {
            return Err(violation(format!("uav {u} needs {} s against the deadline", c.cost.time())));
        }
        let e = alloc.energy(u);
        if (c.cost.energy() - e).abs() > AUDIT_RTOL * e.abs().max(1e-12) {
            return Err(violation(format!("uav {u} energy {e} disagrees with recomputed {}", c.cost.energy())));
        }
    }
    Ok(decisions)
}

/// Mutable state carried across rounds.
struct RunState {
    queues: VirtualQueueState,
    attention: AttentionState,
    affinity: AffinityState,
    models: ModelBundle,
    aou: Vec<Vec<u64>>,
}

/// Runs the scenario for `config.rounds` rounds.
pub fn run(cfg: &ScenarioConfig) -> Result<TrainingReport> {
    let world = World::build(cfg)?;
    run_world(&world)
}

pub fn run_world(world: &World) -> Result<TrainingReport> {
    let cfg = &world.config;
    let (n, m) = (world.model.num_uavs(), world.model.num_tasks());
    let horizon = cfg.rounds.max(1);
    let mut state = RunState {
        queues: VirtualQueueState::new(&world.energy_budgets(), horizon, cfg.v)?,
        attention: AttentionState::new(m, cfg.learning.varpi, cfg.learning.kappa)?,
        affinity: AffinityState::new(m, cfg.learning.ell)?,
        models: world.initial_models()?,
        aou: vec![vec![0; m]; n],
    };
    let opts = cfg.bcd_options();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let record = run_round(world, &mut state, &opts, t)?;
        rounds.push(record);
    }
    let summary = summarize(world, &rounds, &state.queues);
    Ok(TrainingReport { rounds, summary, models: state.models })
}

/// Picks the association for round `t` and prices it. Returns the decision
/// and, when the primary strategy failed, why.
fn decide(world: &World, state: &RunState, opts: &BcdOptions, t: usize) -> Result<(Evaluated, Option<String>)> {
    let cfg = &world.config;
    let alpha = &state.attention.weights;
    let inputs = RoundInputs {
        model: &world.model,
        gains: &world.gains,
        queues: &state.queues.q,
        alpha,
        data: &world.data_share,
        v: cfg.v,
        min_per_task: &cfg.tasks.min_uavs,
    };
    let with_round = |e: Error| match e {
        Error::InfeasibleRound { reason, .. } => Error::InfeasibleRound { round: t, reason },
        other => other,
    };
    if cfg.strategy.association == AssociationStrategy::Exhaustive {
        return exhaustive_assign(&inputs, opts).map(|(e, _)| (e, None)).map_err(with_round);
    }
    let table = utility_table(&inputs);
    let min = &cfg.tasks.min_uavs;
    let primary = match cfg.strategy.association {
        AssociationStrategy::Proposed => two_stage_assign(&table, &state.queues.q, alpha, min),
        AssociationStrategy::Aou => baseline_aou(&table, &state.aou, min),
        AssociationStrategy::ChannelAware => baseline_channel_aware(&table, &world.gains, min),
        AssociationStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, t as u64, 0, stream::ASSOCIATION));
            baseline_random(&table, min, &mut rng)
        }
        AssociationStrategy::Exhaustive => unreachable!("handled above"),
    };
    let failure = match primary {
        Ok(a) => match evaluate(&inputs, &a.assignment, opts) {
            Ok(e) => return Ok((e, None)),
            Err(reason) => Error::InfeasibleRound { round: t, reason },
        },
        Err(e) => with_round(e),
    };
    let limit = cfg.solver.fallback_search_limit;
    if search_space(world.model.num_uavs(), world.model.num_tasks()).is_some_and(|s| s <= limit) {
        log::warn!("round {t}: {failure}; retrying with exhaustive search");
        let (e, _) = exhaustive_assign(&inputs, opts).map_err(with_round)?;
        return Ok((e, Some(failure.to_string())));
    }
    Err(failure)
}

fn run_round(world: &World, state: &mut RunState, opts: &BcdOptions, t: usize) -> Result<RoundRecord> {
    let cfg = &world.config;
    let (n, m) = (world.model.num_uavs(), world.model.num_tasks());
    let alpha = state.attention.weights.clone();
    let data_sizes = &world.data_share;

    let (chosen, fallback) = decide(world, state, opts, t)?;
    let decisions = audit_decision(&world.model, &chosen, &cfg.tasks.min_uavs, t)?;
    let assignment = chosen.association.assignment.clone();

    // Local training, plus the same-start passes the probes need.
    let jobs: Vec<(usize, usize)> = assignment.iter().enumerate().map(|(u, &task)| (task, u)).collect();
    let shard = |task: usize, uav: usize| &world.suite.shards[uav][task];
    let seed = |uav: usize| stream_seed(cfg.seed, t as u64 + 1, uav as u64, stream::BATCH);
    let packets = state.models.train_round(&jobs, shard, seed)?;
    let grads = task_gradients(&packets, m, world.arch.extractor_len());
    let cross = state.models.cross_gradients(&jobs, &grads, shard, seed)?;

    // Queues.
    let energy = chosen.alloc.energies();
    let q_before = state.queues.q.clone();
    state.queues = state.queues.queue_update(&energy)?;

    for task in 0..m {
        let mine: Vec<_> = packets.iter().filter(|p| p.task == task).collect();
        state.models.aggregate_heads(task, &mine)?;
    }

    // Affinity pairs and Shapley coalitions are entries of one probe table.
    let val = &world.suite.validation;
    let evals = state.models.coalition_evals(&cross, val);
    let aff = affinity_round(m, |j| evals[j][1 << j].loss, |i, j| evals[j][1 << i | 1 << j].loss);
    state.affinity.update_share_sets(&aff.theta)?;
    let share_sets = match cfg.strategy.sharing {
        SharingStrategy::Affinity => state.affinity.share_sets.clone(),
        SharingStrategy::AllShared => vec![(0..m).collect(); m],
        SharingStrategy::None => (0..m).map(|i| vec![i]).collect(),
    };
    let phi = task_shapley(&accuracy_games(&evals))?;
    state.models.aggregate_extractors(&grads, &share_sets)?;

    // Evaluation and next round's weights.
    let models = &state.models;
    let val_eval = par::map_range(m, |k| models.evaluate(k, &val[k]));
    let test_eval = par::map_range(m, |k| models.evaluate(k, &world.suite.test[k]));
    let losses: Vec<f64> = val_eval.iter().map(|e| e.loss).collect();
    state.attention.update_loss_weights(&losses)?;
    state.attention.combine_weights(&phi)?;
    if cfg.strategy.association == AssociationStrategy::Aou {
        advance_aou(&mut state.aou, &assignment);
    }

    let objective =
        crate::lyapunov::dpp_objective(&q_before, &energy, cfg.v, &alpha, &assignment, data_sizes);
    let counts = chosen.association.row_counts();
    let tasks = (0..m)
        .map(|k| TaskRound {
            task: k,
            alpha: alpha[k],
            uavs: counts[k],
            data: grads[k].data,
            val_loss: val_eval[k].loss,
            val_acc: val_eval[k].accuracy,
            test_loss: test_eval[k].loss,
            test_acc: test_eval[k].accuracy,
            phi: phi[k],
            share_set: share_sets[k].clone(),
        })
        .collect();
    let alloc = &chosen.alloc;
    let uavs = (0..n)
        .map(|u| UavRound {
            uav: u,
            task: decisions[u].task,
            p: decisions[u].p,
            f: decisions[u].f,
            gamma: decisions[u].gamma,
            t_comp: alloc.t_comp[u],
            t_comm: alloc.t_comm[u],
            e_comp: alloc.e_comp[u],
            e_comm: alloc.e_comm[u],
            queue_before: q_before[u],
            queue_after: state.queues.q[u],
        })
        .collect();
    Ok(RoundRecord {
        round: t,
        objective,
        utility: utility(&alpha, &assignment, data_sizes),
        utility_proxy: utility_proxy(&alpha, data_sizes, &cfg.tasks.min_uavs),
        bcd_iterations: alloc.iterations,
        fallback,
        tasks,
        uavs,
        theta: aff.theta,
        upsilon: state.affinity.upsilon.clone(),
        guarded: aff.guarded,
    })
}

fn summarize(world: &World, rounds: &[RoundRecord], queues: &VirtualQueueState) -> RunSummary {
    let n = world.model.num_uavs();
    let t = rounds.len();
    let energy: Vec<Vec<f64>> = rounds.iter().map(|r| r.uavs.iter().map(|u| u.e_comp + u.e_comm).collect()).collect();
    let cumulative: Vec<f64> = (0..n).map(|u| energy.iter().map(|row| row[u]).sum()).collect();
    let budget = &queues.e_budget_per_round;
    let violation = (0..n).map(|u| (cumulative[u] - t as f64 * budget[u]).max(0.0)).sum::<f64>() / n as f64;
    let proxy: Vec<f64> = rounds.iter().map(|r| r.utility_proxy).collect();
    let b = drift_bound_constant(&world.model, budget);
    let drift = energy_bound_check(&energy, &proxy, budget, b, world.config.v);
    let final_acc = rounds.last().map_or_else(
        || 0.0,
        |r| r.tasks.iter().map(|k| k.test_acc).sum::<f64>() / r.tasks.len() as f64,
    );
    RunSummary {
        rounds: t,
        v: world.config.v,
        final_avg_acc: final_acc,
        performance_gap: 100.0 * (1.0 - final_acc),
        mean_violation: violation,
        total_energy: cumulative.iter().sum(),
        drift_bound_const: drift.drift_bound_const,
        lhs_energy_avg: drift.lhs_energy_avg,
        rhs_bound: drift.rhs_bound,
        fallback_rounds: rounds.iter().filter(|r| r.fallback.is_some()).count(),
    }
}

/// Runs and writes `rounds.csv`, `uavs.csv`, `affinity.csv`, `summary.csv`
/// and the resolved `scenario.toml` into `out`.
pub fn run_to_dir(cfg: &ScenarioConfig, out: &Path) -> Result<TrainingReport> {
    let report = run(cfg)?;
    std::fs::create_dir_all(out)?;
    report::write_csv(&report, out)?;
    std::fs::write(out.join("scenario.toml"), cfg.to_toml_string())?;
    Ok(report)
}

/// Same scenario and seed for each `V`; one summary per entry.
pub fn sweep_v(cfg: &ScenarioConfig, v_list: &[f64]) -> Result<Vec<RunSummary>> {
    if v_list.is_empty() {
        return Err(Error::Config("V list is empty".into()));
    }
    v_list
        .iter()
        .map(|&v| {
            let c = ScenarioConfig { v, ..cfg.clone() };
            c.validate()?;
            run(&c).map(|r| r.summary)
        })
        .collect()
}
