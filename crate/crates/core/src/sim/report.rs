//! Run records and their CSV form.
//!
//! `rounds.csv` has one row per (round, task), `uavs.csv` one per
//! (round, uav), `affinity.csv` one per (round, i, j) and `summary.csv` a
//! single row. Together they reproduce every [`RoundRecord`] and the
//! [`RunSummary`] exactly: floats are written in shortest round-trip form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fl::ModelBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRound {
    pub task: usize,
    /// Weight used for this round's decision.
    pub alpha: f64,
    pub uavs: usize,
    /// Samples behind the task's gradient this round.
    pub data: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    /// This round's Task Shapley Value.
    pub phi: f64,
    pub share_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavRound {
    pub uav: usize,
    pub task: usize,
    pub p: f64,
    pub f: f64,
    pub gamma: f64,
    pub t_comp: f64,
    pub t_comm: f64,
    pub e_comp: f64,
    pub e_comm: f64,
    pub queue_before: f64,
    pub queue_after: f64,
}

impl UavRound {
    pub fn energy(&self) -> f64 {
        self.e_comp + self.e_comm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Drift-plus-penalty value of the committed decision.
    pub objective: f64,
    pub utility: f64,
    /// Upper proxy for the round's best achievable utility.
    pub utility_proxy: f64,
    pub bcd_iterations: usize,
    /// Why the primary association failed, when a fallback was used.
    pub fallback: Option<String>,
    pub tasks: Vec<TaskRound>,
    pub uavs: Vec<UavRound>,
    pub theta: Vec<Vec<f64>>,
    pub upsilon: Vec<Vec<f64>>,
    pub guarded: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds: usize,
    pub v: f64,
    /// Mean test accuracy over tasks after the last round, in [0, 1].
    pub final_avg_acc: f64,
    /// `100 * (1 - final_avg_acc)`.
    pub performance_gap: f64,
    /// `max(0, cumulative energy - T * budget)` averaged over UAVs.
    pub mean_violation: f64,
    pub total_energy: f64,
    pub drift_bound_const: f64,
    /// Time-averaged total energy per round.
    pub lhs_energy_avg: f64,
    /// Bound on `lhs_energy_avg`, using the utility proxy.
    pub rhs_bound: f64,
    pub fallback_rounds: usize,
}

impl RunSummary {
    pub fn bound_holds(&self) -> bool {
        self.lhs_energy_avg <= self.rhs_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub rounds: Vec<RoundRecord>,
    pub summary: RunSummary,
    pub models: ModelBundle,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskRow {
    round: usize,
    task: usize,
    alpha: f64,
    uavs: usize,
    data: f64,
    val_loss: f64,
    val_acc: f64,
    test_loss: f64,
    test_acc: f64,
    phi: f64,
    share_set: String,
    objective: f64,
    utility: f64,
    utility_proxy: f64,
    bcd_iterations: usize,
    fallback: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct UavRow {
    round: usize,
    uav: usize,
    task: usize,
    p: f64,
    f: f64,
    gamma: f64,
    t_comp: f64,
    t_comm: f64,
    e_comp: f64,
    e_comm: f64,
    queue_before: f64,
    queue_after: f64,
}

impl UavRow {
    fn new(round: usize, u: &UavRound) -> Self {
        UavRow {
            round,
            uav: u.uav,
            task: u.task,
            p: u.p,
            f: u.f,
            gamma: u.gamma,
            t_comp: u.t_comp,
            t_comm: u.t_comm,
            e_comp: u.e_comp,
            e_comm: u.e_comm,
            queue_before: u.queue_before,
            queue_after: u.queue_after,
        }
    }

    fn into_record(self) -> UavRound {
        UavRound {
            uav: self.uav,
            task: self.task,
            p: self.p,
            f: self.f,
            gamma: self.gamma,
            t_comp: self.t_comp,
            t_comm: self.t_comm,
            e_comp: self.e_comp,
            e_comm: self.e_comm,
            queue_before: self.queue_before,
            queue_after: self.queue_after,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AffinityRow {
    round: usize,
    i: usize,
    j: usize,
    theta: f64,
    upsilon: f64,
    guarded: bool,
}

fn join_set(set: &[usize]) -> String {
    set.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

fn split_set(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|x| x.parse().map_err(|_| Error::Format(format!("bad share set {s:?}")))).collect()
}

pub fn write_csv(report: &TrainingReport, dir: &Path) -> Result<()> {
    let mut tasks = csv::Writer::from_path(dir.join("rounds.csv"))?;
    let mut uavs = csv::Writer::from_path(dir.join("uavs.csv"))?;
    let mut aff = csv::Writer::from_path(dir.join("affinity.csv"))?;
    for r in &report.rounds {
        for k in &r.tasks {
            tasks.serialize(TaskRow {
                round: r.round,
                task: k.task,
                alpha: k.alpha,
                uavs: k.uavs,
                data: k.data,
                val_loss: k.val_loss,
                val_acc: k.val_acc,
                test_loss: k.test_loss,
                test_acc: k.test_acc,
                phi: k.phi,
                share_set: join_set(&k.share_set),
                objective: r.objective,
                utility: r.utility,
                utility_proxy: r.utility_proxy,
                bcd_iterations: r.bcd_iterations,
                fallback: r.fallback.clone().unwrap_or_default(),
            })?;
        }
        for u in &r.uavs {
            uavs.serialize(UavRow::new(r.round, u))?;
        }
        for (i, row) in r.theta.iter().enumerate() {
            for (j, &theta) in row.iter().enumerate() {
                let guarded = r.guarded.contains(&(i, j));
                aff.serialize(AffinityRow { round: r.round, i, j, theta, upsilon: r.upsilon[i][j], guarded })?;
            }
        }
    }
    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    summary.serialize(&report.summary)?;
    for w in [&mut tasks, &mut uavs, &mut aff, &mut summary] {
        w.flush()?;
    }
    Ok(())
}

/// One CSV row per summary, e.g. the result of a V sweep.
pub fn write_summaries<W: std::io::Write>(rows: &[RunSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    csv::Reader::from_path(path)?.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Rebuilds the per-round records and the summary from a CSV directory.
pub fn read_csv(dir: &Path) -> Result<(Vec<RoundRecord>, RunSummary)> {
    let task_rows: Vec<TaskRow> = read_rows(&dir.join("rounds.csv"))?;
    let uav_rows: Vec<UavRow> = read_rows(&dir.join("uavs.csv"))?;
    let aff_rows: Vec<AffinityRow> = read_rows(&dir.join("affinity.csv"))?;
    let summary = read_rows::<RunSummary>(&dir.join("summary.csv"))?
        .pop()
        .ok_or_else(|| Error::Format("summary.csv has no row".into()))?;
    let mut rounds: Vec<RoundRecord> = Vec::new();
    for row in task_rows {
        if rounds.last().is_none_or(|r| r.round != row.round) {
            rounds.push(RoundRecord {
                round: row.round,
                objective: row.objective,
                utility: row.utility,
                utility_proxy: row.utility_proxy,
                bcd_iterations: row.bcd_iterations,
                fallback: (!row.fallback.is_empty()).then(|| row.fallback.clone()),
                tasks: Vec::new(),
                uavs: Vec::new(),
                theta: Vec::new(),
                upsilon: Vec::new(),
                guarded: Vec::new(),
            });
        }
        let r = rounds.last_mut().expect("pushed above");
        r.tasks.push(TaskRound {
            task: row.task,
            alpha: row.alpha,
            uavs: row.uavs,
            data: row.data,
            val_loss: row.val_loss,
            val_acc: row.val_acc,
            test_loss: row.test_loss,
            test_acc: row.test_acc,
            phi: row.phi,
            share_set: split_set(&row.share_set)?,
        });
    }
    let find = |rounds: &mut Vec<RoundRecord>, round: usize| -> Result<usize> {
        rounds.iter().position(|r| r.round == round).ok_or_else(|| Error::Format(format!("round {round} missing")))
    };
    for row in uav_rows {
        let k = find(&mut rounds, row.round)?;
        rounds[k].uavs.push(row.into_record());
    }
    for row in aff_rows {
        let k = find(&mut rounds, row.round)?;
        let r = &mut rounds[k];
        let m = r.tasks.len();
        if r.theta.is_empty() {
            r.theta = vec![vec![0.0; m]; m];
            r.upsilon = vec![vec![0.0; m]; m];
        }
        r.theta[row.i][row.j] = row.theta;
        r.upsilon[row.i][row.j] = row.upsilon;
        if row.guarded {
            r.guarded.push((row.i, row.j));
        }
    }
    Ok((rounds, summary))
}
