//! Local training and server-side aggregation.
//!
//! Every task owns an extractor and a head of identical shape. A UAV serving
//! task `m` runs `K` SGD steps from the task's current parameters and uploads
//! the accumulated step `G = (w_before - w_after) / eta`, so the server's
//! update `w - eta G` reproduces the local trajectory when only one UAV
//! contributes.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Arch, Dataset, Eval};
use crate::error::{Error, Result};
use crate::par;

/// Training hyperparameters shared by every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub local_iters: usize,
    pub batch_size: usize,
    /// Use the whole shard at every local step.
    pub full_batch: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 && !self.full_batch {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-task extractors and heads plus the training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub arch: Arch,
    pub extractors: Vec<Vec<f64>>,
    pub heads: Vec<Vec<f64>>,
    pub train: TrainConfig,
}

/// One UAV's upload for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPacket {
    pub g_s: Vec<f64>,
    pub g_u: Vec<f64>,
    pub sample_count: f64,
    pub task: usize,
    pub uav: usize,
}

/// Independent stream seed for `(round, uav, purpose)` under one master seed
/// (splitmix64 finalizer over the packed key).
pub fn stream_seed(master: u64, round: u64, uav: u64, purpose: u64) -> u64 {
    let mut z = master;
    for part in [round, uav, purpose] {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(part);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

impl ModelBundle {
    /// Every task starts from the same extractor (so the shapes and the
    /// starting point are shared) and its own head.
    pub fn new(arch: Arch, tasks: usize, train: TrainConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        train.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ext, head) = arch.init(&mut rng);
        Ok(ModelBundle { extractors: vec![ext; tasks], heads: vec![head; tasks], arch, train })
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn evaluate(&self, task: usize, data: &Dataset) -> Eval {
        self.arch.evaluate(&self.extractors[task], &self.heads[task], data)
    }

    /// `K` SGD steps on `shard` starting from task `task`'s parameters.
    /// Batches are redrawn (without replacement) each step from `seed`.
    pub fn local_train(&self, task: usize, uav: usize, shard: &Dataset, seed: u64) -> Result<GradientPacket> {
        self.local_train_from(task, &self.extractors[task], uav, shard, seed)
    }

    /// As [`local_train`](Self::local_train), but the extractor starts from
    /// `start` instead of the task's own.
    pub fn local_train_from(
        &self,
        task: usize,
        start: &[f64],
        uav: usize,
        shard: &Dataset,
        seed: u64,
    ) -> Result<GradientPacket> {
        if shard.is_empty() {
            return Err(Error::EmptyShard { uav });
        }
        if start.len() != self.arch.extractor_len() {
            return Err(Error::Domain(format!("start extractor has {} parameters", start.len())));
        }
        let tc = &self.train;
        let mut ext = start.to_vec();
        let mut head = self.heads[task].clone();
        let mut g_ext = vec![0.0; ext.len()];
        let mut g_head = vec![0.0; head.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let whole = tc.full_batch || tc.batch_size >= shard.len();
        for _ in 0..tc.local_iters {
            let loss = if whole {
                self.arch.loss_and_grad(&ext, &head, shard, &mut g_ext, &mut g_head)
            } else {
                let idx = index::sample(&mut rng, shard.len(), tc.batch_size).into_vec();
                self.arch.loss_and_grad(&ext, &head, &shard.subset(&idx), &mut g_ext, &mut g_head)
            };
            if !loss.is_finite() {
                return Err(Error::Domain(format!("local loss diverged on uav {uav}, task {task}")));
            }
            ext.iter_mut().zip(&g_ext).for_each(|(w, g)| *w -= tc.lr * g);
            head.iter_mut().zip(&g_head).for_each(|(w, g)| *w -= tc.lr * g);
        }
        let delta = |before: &[f64], after: &[f64]| -> Vec<f64> {
            before.iter().zip(after).map(|(b, a)| (b - a) / tc.lr).collect()
        };
        Ok(GradientPacket {
            g_s: delta(start, &ext),
            g_u: delta(&self.heads[task], &head),
            sample_count: shard.len() as f64,
            task,
            uav,
        })
    }

    /// Trains every `(task, uav)` job in parallel; `shard(task, uav)` supplies
    /// the data and `seed(uav)` the batch stream.
    pub fn train_round<'a, S, R>(&self, jobs: &[(usize, usize)], shard: S, seed: R) -> Result<Vec<GradientPacket>>
    where
        S: Fn(usize, usize) -> &'a Dataset + Sync + Send,
        R: Fn(usize) -> u64 + Sync + Send,
    {
        par::map(jobs, |&(task, uav)| self.local_train(task, uav, shard(task, uav), seed(uav))).into_iter().collect()
    }

    /// Same-start gradients for the affinity and Shapley probes:
    /// `out[j][i]` is task `i`'s aggregated extractor gradient when its UAVs
    /// start this round from task `j`'s extractor, replaying the batches of
    /// `own`. Pairs whose extractors already coincide reuse `own[i]`.
    pub fn cross_gradients<'a, S, R>(
        &self,
        jobs: &[(usize, usize)],
        own: &[TaskGradient],
        shard: S,
        seed: R,
    ) -> Result<Vec<Vec<TaskGradient>>>
    where
        S: Fn(usize, usize) -> &'a Dataset + Sync + Send,
        R: Fn(usize) -> u64 + Sync + Send,
    {
        let m = self.num_tasks();
        if own.len() != m {
            return Err(Error::Domain(format!("need {m} task gradients")));
        }
        let needed: Vec<(usize, usize, usize)> = (0..m)
            .flat_map(|j| jobs.iter().map(move |&(task, uav)| (j, task, uav)))
            .filter(|&(j, task, _)| self.extractors[j] != self.extractors[task])
            .collect();
        let packets: Vec<(usize, GradientPacket)> = par::map(&needed, |&(j, task, uav)| {
            self.local_train_from(task, &self.extractors[j], uav, shard(task, uav), seed(uav)).map(|p| (j, p))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let len = self.arch.extractor_len();
        Ok((0..m)
            .map(|j| {
                let mine: Vec<GradientPacket> =
                    packets.iter().filter(|(target, _)| *target == j).map(|(_, p)| p.clone()).collect();
                let fresh = task_gradients(&mine, m, len);
                (0..m)
                    .map(|i| if self.extractors[j] == self.extractors[i] { own[i].clone() } else { fresh[i].clone() })
                    .collect()
            })
            .collect())
    }

    /// Head update from this task's packets: `w - eta sum(D g) / sum(D)`.
    /// Returns the averaged head gradient.
    pub fn aggregate_heads(&mut self, task: usize, packets: &[&GradientPacket]) -> Result<Vec<f64>> {
        let g = weighted_mean(packets.iter().map(|p| (p.g_u.as_slice(), p.sample_count)))
            .ok_or(Error::EmptyTask { task })?;
        step(&mut self.heads[task], self.train.lr, &g);
        Ok(g)
    }

    /// Extractor update through the share sets:
    /// `w_m - eta sum_{i in S_m} D_i G_i / sum_{i in S_m} D_i`.
    /// Tasks with no data this round contribute nothing; a share set with no
    /// data leaves the extractor unchanged.
    pub fn aggregate_extractors(&mut self, task_grads: &[TaskGradient], share_sets: &[Vec<usize>]) -> Result<()> {
        let m = self.num_tasks();
        if task_grads.len() != m || share_sets.len() != m {
            return Err(Error::Domain(format!("need {m} task gradients and share sets")));
        }
        for (t, set) in share_sets.iter().enumerate() {
            if !set.contains(&t) || set.iter().any(|&i| i >= m) {
                return Err(Error::Domain(format!("share set {t} must contain {t} and valid tasks only")));
            }
        }
        let lr = self.train.lr;
        for (ext, set) in self.extractors.iter_mut().zip(share_sets) {
            if let Some(g) = mix(task_grads, set) {
                step(ext, lr, &g);
            }
        }
        Ok(())
    }

    /// Loss and accuracy of task `task` with its extractor moved by the
    /// data-weighted mix of the listed task gradients (no move when the mix
    /// carries no data).
    pub fn probe(&self, task: usize, task_grads: &[TaskGradient], members: &[usize], data: &Dataset) -> Eval {
        let mut ext = self.extractors[task].clone();
        if let Some(g) = mix(task_grads, members) {
            step(&mut ext, self.train.lr, &g);
        }
        self.arch.evaluate(&ext, &self.heads[task], data)
    }

    /// `evals[m][mask]`: task `m` on `validation[m]` after moving its
    /// extractor by the mix of `grads[m][i]` over the tasks `i` in `mask`.
    /// The affinity pairs and the Shapley coalitions are all entries of this
    /// table.
    pub fn coalition_evals(&self, grads: &[Vec<TaskGradient>], validation: &[Dataset]) -> Vec<Vec<Eval>> {
        let m = self.num_tasks();
        let size = 1usize << m;
        let flat = par::map_range(m * size, |k| {
            let (t, mask) = (k / size, k % size);
            self.probe(t, &grads[t], &members(mask, m), &validation[t])
        });
        flat.chunks(size).map(<[Eval]>::to_vec).collect()
    }

    /// Coalition games for the Shapley step: `games[m][mask]` is task `m`'s
    /// validation accuracy after moving its extractor by the tasks in `mask`.
    pub fn shapley_games(&self, grads: &[Vec<TaskGradient>], validation: &[Dataset]) -> Vec<Vec<f64>> {
        accuracy_games(&self.coalition_evals(grads, validation))
    }
}

/// Projects coalition evaluations onto their accuracies.
pub fn accuracy_games(evals: &[Vec<Eval>]) -> Vec<Vec<f64>> {
    evals.iter().map(|row| row.iter().map(|e| e.accuracy).collect()).collect()
}

/// Bitmask of a task set.
pub fn mask_of(tasks: &[usize]) -> usize {
    tasks.iter().fold(0, |acc, &t| acc | 1 << t)
}

/// Tasks in `mask`, ascending.
pub fn members(mask: usize, tasks: usize) -> Vec<usize> {
    (0..tasks).filter(|i| mask >> i & 1 == 1).collect()
}

/// A task's aggregated extractor gradient and the data behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGradient {
    pub g_s: Vec<f64>,
    pub data: f64,
}

/// Aggregates each task's extractor gradients; tasks without packets get a
/// zero gradient and zero data.
pub fn task_gradients(packets: &[GradientPacket], tasks: usize, len: usize) -> Vec<TaskGradient> {
    (0..tasks)
        .map(|t| {
            let own = packets.iter().filter(|p| p.task == t).map(|p| (p.g_s.as_slice(), p.sample_count));
            match weighted_mean(own) {
                Some(g_s) => {
                    let data = packets.iter().filter(|p| p.task == t).map(|p| p.sample_count).sum();
                    TaskGradient { g_s, data }
                }
                None => TaskGradient { g_s: vec![0.0; len], data: 0.0 },
            }
        })
        .collect()
}

/// `sum(w v) / sum(w)` over the items, or `None` when the weights sum to 0.
fn weighted_mean<'a>(items: impl Iterator<Item = (&'a [f64], f64)>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut total = 0.0;
    for (v, w) in items {
        let a = acc.get_or_insert_with(|| vec![0.0; v.len()]);
        a.iter_mut().zip(v).for_each(|(s, x)| *s += w * x);
        total += w;
    }
    let acc = acc?;
    (total > 0.0).then(|| acc.into_iter().map(|s| s / total).collect())
}

fn mix(task_grads: &[TaskGradient], members: &[usize]) -> Option<Vec<f64>> {
    weighted_mean(members.iter().map(|&i| (task_grads[i].g_s.as_slice(), task_grads[i].data)))
}

fn step(w: &mut [f64], lr: f64, g: &[f64]) {
    w.iter_mut().zip(g).for_each(|(w, g)| *w -= lr * g);
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn toy_data(rng: &mut impl Rng, n: usize, dim: usize, classes: usize) -> Dataset {
        let x = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..n).map(|_| rng.random_range(0..classes)).collect();
        Dataset { dim, x, y }
    }

    fn bundle(hidden: Vec<usize>, tasks: usize, k: usize, full_batch: bool) -> ModelBundle {
        let arch = Arch { input: 5, hidden, classes: 3 };
        let train = TrainConfig { lr: 0.05, local_iters: k, batch_size: 8, full_batch };
        ModelBundle::new(arch, tasks, train, 11).unwrap()
    }

    fn random_packet(rng: &mut impl Rng, b: &ModelBundle, task: usize, uav: usize) -> GradientPacket {
        GradientPacket {
            g_s: (0..b.arch.extractor_len()).map(|_| rng.sample(StandardNormal)).collect(),
            g_u: (0..b.arch.head_len()).map(|_| rng.sample(StandardNormal)).collect(),
            sample_count: rng.random_range(1..100) as f64,
            task,
            uav,
        }
    }

    #[test]
    fn zero_iterations_give_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = bundle(vec![4], 1, 0, false);
        let p = b.local_train(0, 0, &toy_data(&mut rng, 20, 5, 3), 0).unwrap();
        assert!(p.g_s.iter().chain(&p.g_u).all(|g| *g == 0.0));
    }

    #[test]
    fn empty_shard_is_an_error() {
        let b = bundle(vec![4], 1, 1, false);
        let empty = Dataset { dim: 5, ..Dataset::default() };
        assert!(matches!(b.local_train(0, 3, &empty, 0), Err(Error::EmptyShard { uav: 3 })));
    }

    #[test]
    fn single_full_batch_step_is_the_analytic_gradient() {
        // Identity extractor: the head gradient of softmax regression is
        // (p - onehot) x^T averaged over samples.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = bundle(vec![], 1, 1, true);
        let data = toy_data(&mut rng, 30, 5, 3);
        let p = b.local_train(0, 0, &data, 0).unwrap();
        let head = &b.heads[0];
        let mut want = vec![0.0; head.len()];
        for s in 0..data.len() {
            let x = data.row(s);
            let z: Vec<f64> =
                (0..3).map(|c| head[15 + c] + (0..5).map(|k| head[c * 5 + k] * x[k]).sum::<f64>()).collect();
            let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
            let s_e: f64 = e.iter().sum();
            for c in 0..3 {
                let d = e[c] / s_e - f64::from(u8::from(data.y[s] == c));
                for k in 0..5 {
                    want[c * 5 + k] += d * x[k] / 30.0;
                }
                want[15 + c] += d / 30.0;
            }
        }
        for (a, w) in p.g_u.iter().zip(&want) {
            assert!((a - w).abs() < 1e-10, "{a} vs {w}");
        }
    }

    #[test]
    fn one_uav_round_reproduces_local_sgd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = bundle(vec![6, 4], 1, 5, false);
        let data = toy_data(&mut rng, 40, 5, 3);
        // Plain SGD with the same batch stream.
        let (mut ext, mut head) = (b.extractors[0].clone(), b.heads[0].clone());
        let mut ge = vec![0.0; ext.len()];
        let mut gh = vec![0.0; head.len()];
        let mut brng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let idx = index::sample(&mut brng, 40, 8).into_vec();
            b.arch.loss_and_grad(&ext, &head, &data.subset(&idx), &mut ge, &mut gh);
            step(&mut ext, 0.05, &ge);
            step(&mut head, 0.05, &gh);
        }
        let p = b.local_train(0, 0, &data, 77).unwrap();
        b.aggregate_heads(0, &[&p]).unwrap();
        let tg = task_gradients(&[p], 1, ext.len());
        b.aggregate_extractors(&tg, &[vec![0]]).unwrap();
        for (a, w) in b.extractors[0].iter().zip(&ext).chain(b.heads[0].iter().zip(&head)) {
            assert!((a - w).abs() < 1e-12, "{a} vs {w}");
        }
    }

    #[test]
    fn convex_loss_does_not_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let arch = Arch { input: 5, hidden: vec![], classes: 3 };
        let train = TrainConfig { lr: 0.01, local_iters: 1, batch_size: 1, full_batch: true };
        let mut b = ModelBundle::new(arch, 1, train, 5).unwrap();
        let data = toy_data(&mut rng, 50, 5, 3);
        let mut last = b.evaluate(0, &data).loss;
        for _ in 0..30 {
            let p = b.local_train(0, 0, &data, 0).unwrap();
            b.aggregate_heads(0, &[&p]).unwrap();
            let loss = b.evaluate(0, &data).loss;
            assert!(loss <= last + 1e-15, "{loss} > {last}");
            last = loss;
        }
    }

    #[test]
    fn head_weights_follow_data() {
        let mut b = bundle(vec![], 1, 1, false);
        let len = b.arch.head_len();
        let before = b.heads[0].clone();
        let p = |v: f64, d: f64| GradientPacket { g_s: vec![], g_u: vec![v; len], sample_count: d, task: 0, uav: 0 };
        let (a, c) = (p(1.0, 1.0), p(5.0, 3.0));
        let g = b.aggregate_heads(0, &[&a, &c]).unwrap();
        assert!(g.iter().all(|v| (v - 4.0).abs() < 1e-15));
        for (w, o) in b.heads[0].iter().zip(&before) {
            assert!((w - (o - 0.05 * 4.0)).abs() < 1e-15);
        }
        assert!(matches!(b.aggregate_heads(0, &[]), Err(Error::EmptyTask { task: 0 })));
    }

    #[test]
    fn aggregation_matches_naive_sums_in_any_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = bundle(vec![4, 3], 3, 1, false);
        let mut packets: Vec<GradientPacket> = (0..9).map(|n| random_packet(&mut rng, &base, n % 3, n)).collect();
        let share = vec![vec![0, 2], vec![1], vec![0, 1, 2]];

        // Naive loops.
        let lr = base.train.lr;
        let mut want_heads = base.heads.clone();
        let mut g_task = vec![vec![0.0; base.arch.extractor_len()]; 3];
        let mut d_task = [0.0; 3];
        for t in 0..3 {
            let mine: Vec<&GradientPacket> = packets.iter().filter(|p| p.task == t).collect();
            let d: f64 = mine.iter().map(|p| p.sample_count).sum();
            for k in 0..base.arch.head_len() {
                let s: f64 = mine.iter().map(|p| p.sample_count * p.g_u[k]).sum();
                want_heads[t][k] -= lr * s / d;
            }
            for k in 0..base.arch.extractor_len() {
                g_task[t][k] = mine.iter().map(|p| p.sample_count * p.g_s[k]).sum::<f64>() / d;
            }
            d_task[t] = d;
        }
        let mut want_ext = base.extractors.clone();
        for t in 0..3 {
            let d: f64 = share[t].iter().map(|&i| d_task[i]).sum();
            for k in 0..base.arch.extractor_len() {
                let s: f64 = share[t].iter().map(|&i| d_task[i] * g_task[i][k]).sum();
                want_ext[t][k] -= lr * s / d;
            }
        }

        for _ in 0..3 {
            packets.shuffle(&mut rng);
            let mut b = base.clone();
            for t in 0..3 {
                let mine: Vec<&GradientPacket> = packets.iter().filter(|p| p.task == t).collect();
                b.aggregate_heads(t, &mine).unwrap();
            }
            let tg = task_gradients(&packets, 3, b.arch.extractor_len());
            b.aggregate_extractors(&tg, &share).unwrap();
            for (got, want) in b.heads.iter().chain(&b.extractors).zip(want_heads.iter().chain(&want_ext)) {
                assert_eq!(got.len(), want.len());
                for (a, w) in got.iter().zip(want) {
                    assert!((a - w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sharing_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = bundle(vec![3], 3, 1, false);
        let len = base.arch.extractor_len();
        let tg: Vec<TaskGradient> = (0..3)
            .map(|_| TaskGradient { g_s: (0..len).map(|_| rng.sample(StandardNormal)).collect(), data: 10.0 })
            .collect();
        let mut own = base.clone();
        own.aggregate_extractors(&tg, &[vec![0], vec![1], vec![2]]).unwrap();
        let mut all = base.clone();
        all.aggregate_extractors(&tg, &vec![vec![0, 1, 2]; 3]).unwrap();
        for t in 0..3 {
            for k in 0..len {
                let w0 = base.extractors[t][k];
                assert!((own.extractors[t][k] - (w0 - 0.05 * tg[t].g_s[k])).abs() < 1e-15);
                let avg = (tg[0].g_s[k] + tg[1].g_s[k] + tg[2].g_s[k]) / 3.0;
                assert!((all.extractors[t][k] - (w0 - 0.05 * avg)).abs() < 1e-14);
            }
        }
        assert!(base.clone().aggregate_extractors(&tg, &[vec![1], vec![1], vec![2]]).is_err());
    }

    #[test]
    fn idle_task_keeps_its_extractor() {
        let mut b = bundle(vec![3], 2, 1, false);
        let len = b.arch.extractor_len();
        let before = b.extractors.clone();
        let tg = task_gradients(&[], 2, len);
        b.aggregate_extractors(&tg, &[vec![0, 1], vec![1]]).unwrap();
        assert_eq!(b.extractors, before);
    }

    #[test]
    fn training_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = bundle(vec![4], 2, 3, false);
        let data = toy_data(&mut rng, 40, 5, 3);
        let jobs = [(0, 0), (1, 1), (0, 2)];
        let run = || b.train_round(&jobs, |_, _| &data, |u| stream_seed(9, 1, u as u64, 0)).unwrap();
        assert_eq!(run(), run());
        assert_ne!(stream_seed(9, 1, 0, 0), stream_seed(9, 1, 1, 0));
        assert_ne!(stream_seed(9, 1, 0, 0), stream_seed(9, 2, 0, 0));
    }

    #[test]
    fn shapley_games_cover_every_coalition() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = bundle(vec![3], 2, 1, false);
        let val = vec![toy_data(&mut rng, 30, 5, 3), toy_data(&mut rng, 30, 5, 3)];
        let len = b.arch.extractor_len();
        let tg = vec![TaskGradient { g_s: vec![1.0; len], data: 1.0 }, TaskGradient { g_s: vec![-1.0; len], data: 1.0 }];
        let games = b.shapley_games(&[tg.clone(), tg], &val);
        assert_eq!(games.len(), 2);
        assert!(games.iter().all(|g| g.len() == 4));
        // The empty coalition leaves the model untouched.
        assert_eq!(games[0][0], b.evaluate(0, &val[0]).accuracy);
        // Equal-data opposite gradients cancel.
        assert_eq!(games[1][3], b.evaluate(1, &val[1]).accuracy);
    }

    #[test]
    fn own_gradient_entry_is_the_aggregated_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = bundle(vec![4], 3, 1, false);
        let val: Vec<Dataset> = (0..3).map(|_| toy_data(&mut rng, 40, 5, 3)).collect();
        let len = b.arch.extractor_len();
        let tg: Vec<TaskGradient> = (0..3)
            .map(|t| TaskGradient {
                g_s: (0..len).map(|_| rng.sample(StandardNormal)).collect(),
                data: 5.0 + t as f64,
            })
            .collect();
        let evals = b.coalition_evals(&vec![tg.clone(); 3], &val);
        let share = vec![vec![0, 2], vec![1], vec![0, 1, 2]];
        b.aggregate_extractors(&tg, &share).unwrap();
        for t in 0..3 {
            assert_eq!(evals[t][mask_of(&share[t])], b.evaluate(t, &val[t]));
        }
        assert_eq!(members(0b101, 3), vec![0, 2]);
    }

    #[test]
    fn cross_gradients_start_from_the_target_extractor() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut b = bundle(vec![4], 2, 2, false);
        let shards = [toy_data(&mut rng, 30, 5, 3), toy_data(&mut rng, 30, 5, 3)];
        let jobs = [(0, 0), (1, 1)];
        let seed = |u: usize| stream_seed(3, 1, u as u64, 0);
        let shard = |_: usize, u: usize| &shards[u];
        let own = task_gradients(&b.train_round(&jobs, shard, seed).unwrap(), 2, b.arch.extractor_len());

        // Identical extractors: nothing to recompute.
        let cross = b.cross_gradients(&jobs, &own, shard, seed).unwrap();
        assert_eq!(cross, vec![own.clone(), own.clone()]);

        b.extractors[1].iter_mut().for_each(|w| *w += 0.1);
        let own = task_gradients(&b.train_round(&jobs, shard, seed).unwrap(), 2, b.arch.extractor_len());
        let cross = b.cross_gradients(&jobs, &own, shard, seed).unwrap();
        assert_eq!(cross[0][0], own[0]);
        assert_eq!(cross[1][1], own[1]);
        let p = b.local_train_from(1, &b.extractors[0], 1, &shards[1], seed(1)).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&cross[0][1].g_s, &p.g_s));
        assert_eq!(cross[0][1].data, 30.0);
        let p = b.local_train_from(0, &b.extractors[1], 0, &shards[0], seed(0)).unwrap();
        assert!(close(&cross[1][0].g_s, &p.g_s));
    }
}
