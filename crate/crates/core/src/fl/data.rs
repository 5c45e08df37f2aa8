//! Synthetic multi-task classification suite.
//!
//! Inputs are Gaussian. A low-dimensional latent subspace `U` carries the
//! label of every *correlated* task (they share one labeling rule and differ
//! only by a domain offset on nuisance directions). *Conflicting* tasks are
//! labeled by the quadrant of two nuisance directions. Correlated inputs have
//! the nuisance directions stretched and conflicting inputs the latent ones,
//! so a shared extractor cannot serve both well. Each UAV holds one shard per task; shard
//! sizes follow `Dirichlet(alpha1)` over UAVs and class mixes
//! `Dirichlet(alpha2)` per shard.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Shares the latent labeling rule; `domain` picks the input offset.
    Correlated { domain: usize },
    /// Labeled by nuisance directions the correlated tasks must suppress.
    Conflicting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Must be 4 when any task is conflicting (quadrant labels).
    pub classes: usize,
    pub tasks: Vec<TaskKind>,
    pub num_uavs: usize,
    /// Samples per task summed over UAVs.
    pub total_samples: usize,
    /// Floor on any UAV's shard size.
    pub min_shard: usize,
    /// Dirichlet concentration of shard sizes.
    pub alpha1: f64,
    /// Dirichlet concentration of per-shard class mixes.
    pub alpha2: f64,
    /// Probability that a label is replaced by a uniform draw.
    pub label_noise: f64,
    /// Standard deviation along the conflicting directions.
    pub nuisance_scale: f64,
    /// Norm of each correlated domain's input offset.
    pub domain_shift: f64,
    /// Held-out samples per task at its EV.
    pub val_size: usize,
    /// Global test samples per task.
    pub test_size: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            input_dim: 24,
            latent_dim: 4,
            classes: 4,
            tasks: vec![
                TaskKind::Correlated { domain: 0 },
                TaskKind::Correlated { domain: 1 },
                TaskKind::Conflicting,
            ],
            num_uavs: 10,
            total_samples: 3000,
            min_shard: 32,
            alpha1: 5.0,
            alpha2: 0.5,
            label_noise: 0.05,
            nuisance_scale: 2.0,
            domain_shift: 2.0,
            val_size: 256,
            test_size: 1000,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.tasks.is_empty() || self.num_uavs == 0 || self.classes < 2 {
            return bad("suite needs tasks, uavs and at least two classes");
        }
        // Latent directions plus two conflicting directions plus room for
        // domain offsets.
        if self.latent_dim == 0 || self.latent_dim + 3 > self.input_dim {
            return bad("input_dim must exceed latent_dim + 2");
        }
        if self.tasks.contains(&TaskKind::Conflicting) && self.classes != 4 {
            return bad("conflicting tasks use quadrant labels and need classes = 4");
        }
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return bad("Dirichlet parameters must be positive");
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("label_noise must lie in [0, 1]");
        }
        if self.min_shard * self.num_uavs > self.total_samples {
            return bad("min_shard * num_uavs exceeds total_samples");
        }
        Ok(())
    }
}

/// Generated data: `shards[uav][task]`, with the class mix each shard was
/// drawn from, per-task validation and test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskSuite {
    pub config: SuiteConfig,
    pub shards: Vec<Vec<Dataset>>,
    pub class_mix: Vec<Vec<Vec<f64>>>,
    /// Samples per UAV (the same for each of its task shards).
    pub sizes: Vec<usize>,
    pub validation: Vec<Dataset>,
    pub test: Vec<Dataset>,
}

impl SyntheticTaskSuite {
    pub fn num_tasks(&self) -> usize {
        self.config.tasks.len()
    }
}

/// Labeling rules shared by every split.
struct Generator {
    dim: usize,
    classes: usize,
    /// Latent directions, each a unit vector.
    latent: Vec<Vec<f64>>,
    /// Class scores from latent coordinates, `scores[c][k]`.
    scores: Vec<Vec<f64>>,
    nuisance: [Vec<f64>; 2],
    /// Input offsets for the correlated domains.
    shifts: Vec<Vec<f64>>,
    nuisance_scale: f64,
    label_noise: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales the components of `x` along the orthonormal `dirs` by `s`.
fn stretch(x: &mut [f64], dirs: &[Vec<f64>], s: f64) {
    for u in dirs {
        let p = dot(x, u);
        x.iter_mut().zip(u).for_each(|(v, d)| *v += (s - 1.0) * p * d);
    }
}

/// Gram-Schmidt on `count` random Gaussian vectors.
fn orthonormal(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

impl Generator {
    fn new(cfg: &SuiteConfig, rng: &mut impl Rng) -> Self {
        let domains = cfg
            .tasks
            .iter()
            .filter_map(|t| match t {
                TaskKind::Correlated { domain } => Some(*domain + 1),
                TaskKind::Conflicting => None,
            })
            .max()
            .unwrap_or(0);
        let basis = orthonormal(rng, cfg.latent_dim + 2, cfg.input_dim);
        let latent = basis[..cfg.latent_dim].to_vec();
        let nuisance = [basis[cfg.latent_dim].clone(), basis[cfg.latent_dim + 1].clone()];
        // Offsets live in the complement of the labeling directions.
        let shifts = (0..domains)
            .map(|_| {
                let mut v: Vec<f64> = (0..cfg.input_dim).map(|_| rng.sample(StandardNormal)).collect();
                for b in &basis {
                    let p = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
                }
                let n = dot(&v, &v).sqrt().max(1e-12);
                v.into_iter().map(|x| cfg.domain_shift * x / n).collect()
            })
            .collect();
        let mut scores: Vec<Vec<f64>> =
            (0..cfg.classes).map(|_| (0..cfg.latent_dim).map(|_| rng.sample(StandardNormal)).collect()).collect();
        // Centered score rows keep the classes roughly balanced.
        for k in 0..cfg.latent_dim {
            let mean = scores.iter().map(|r| r[k]).sum::<f64>() / cfg.classes as f64;
            scores.iter_mut().for_each(|r| r[k] -= mean);
        }
        Generator {
            dim: cfg.input_dim,
            classes: cfg.classes,
            latent,
            scores,
            nuisance,
            shifts,
            nuisance_scale: cfg.nuisance_scale,
            label_noise: cfg.label_noise,
        }
    }

    /// One input (before any domain offset) and its clean label. Each task
    /// kind sees the other kind's signal directions stretched, so what one
    /// kind must read the other must squash.
    fn draw(&self, kind: TaskKind, rng: &mut impl Rng) -> (Vec<f64>, usize) {
        let mut x: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let label = match kind {
            TaskKind::Correlated { domain } => {
                stretch(&mut x, &self.nuisance, self.nuisance_scale);
                let z: Vec<f64> = self.latent.iter().map(|u| (1.5 * dot(&x, u)).tanh()).collect();
                let s: Vec<f64> = self.scores.iter().map(|r| dot(r, &z)).collect();
                x.iter_mut().zip(&self.shifts[domain]).for_each(|(v, d)| *v += d);
                (0..self.classes).fold(0, |b, c| if s[c] > s[b] { c } else { b })
            }
            TaskKind::Conflicting => {
                stretch(&mut x, &self.latent, self.nuisance_scale);
                let a = dot(&x, &self.nuisance[0]) > 0.0;
                let b = dot(&x, &self.nuisance[1]) > 0.0;
                2 * usize::from(a) + usize::from(b)
            }
        };
        (x, label)
    }

    fn noisy_label(&self, clean: usize, rng: &mut impl Rng) -> usize {
        if rng.random_bool(self.label_noise) {
            rng.random_range(0..self.classes)
        } else {
            clean
        }
    }

    /// `counts[c]` samples with label `c` (labels after noise), shuffled.
    fn sample_counts(&self, kind: TaskKind, counts: &[usize], rng: &mut impl Rng) -> Dataset {
        let total: usize = counts.iter().sum();
        let mut left = counts.to_vec();
        let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(total);
        let mut tries = 0usize;
        while rows.len() < total {
            let (x, clean) = self.draw(kind, rng);
            let y = self.noisy_label(clean, rng);
            tries += 1;
            // A class the rule almost never produces is filled with relabeled
            // draws rather than looping forever.
            let y = if left[y] > 0 {
                y
            } else if tries > 200 * total.max(1) {
                left.iter().position(|&c| c > 0).expect("rows short implies some class left")
            } else {
                continue;
            };
            left[y] -= 1;
            rows.push((x, y));
        }
        rows.shuffle(rng);
        let mut data = Dataset { dim: self.dim, x: Vec::with_capacity(total * self.dim), y: Vec::with_capacity(total) };
        for (x, y) in rows {
            data.x.extend(x);
            data.y.push(y);
        }
        data
    }

    fn sample_iid(&self, kind: TaskKind, n: usize, rng: &mut impl Rng) -> Dataset {
        let mut data = Dataset { dim: self.dim, x: Vec::with_capacity(n * self.dim), y: Vec::with_capacity(n) };
        for _ in 0..n {
            let (x, clean) = self.draw(kind, rng);
            data.x.extend(x);
            data.y.push(self.noisy_label(clean, rng));
        }
        data
    }
}

/// Largest-remainder rounding of `weights * total` to integers summing to
/// `total`.
pub fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let s: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / s * total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total - out.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        out[i] += 1;
    }
    out
}

fn dirichlet(rng: &mut impl Rng, k: usize, concentration: f64) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    // Normalized Gamma draws; the const-generic `Dirichlet` needs k at
    // compile time.
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        // Tiny concentrations can underflow every draw to zero.
        if s > 0.0 && s.is_finite() {
            return g.into_iter().map(|v| v / s).collect();
        }
    }
}

/// Builds the suite deterministically from `seed`.
pub fn generate_suite(cfg: &SuiteConfig, seed: u64) -> Result<SyntheticTaskSuite> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = Generator::new(cfg, &mut rng);

    let spare = cfg.total_samples - cfg.min_shard * cfg.num_uavs;
    let size_mix = dirichlet(&mut rng, cfg.num_uavs, cfg.alpha1);
    let sizes: Vec<usize> = apportion(&size_mix, spare).into_iter().map(|s| s + cfg.min_shard).collect();

    let mut shards = Vec::with_capacity(cfg.num_uavs);
    let mut class_mix = Vec::with_capacity(cfg.num_uavs);
    for &size in &sizes {
        let mut row = Vec::with_capacity(cfg.tasks.len());
        let mut mixes = Vec::with_capacity(cfg.tasks.len());
        for &kind in &cfg.tasks {
            let mix = dirichlet(&mut rng, cfg.classes, cfg.alpha2);
            let counts = apportion(&mix, size);
            row.push(generator.sample_counts(kind, &counts, &mut rng));
            mixes.push(mix);
        }
        shards.push(row);
        class_mix.push(mixes);
    }
    let validation = cfg.tasks.iter().map(|&k| generator.sample_iid(k, cfg.val_size, &mut rng)).collect();
    let test = cfg.tasks.iter().map(|&k| generator.sample_iid(k, cfg.test_size, &mut rng)).collect();
    Ok(SyntheticTaskSuite { config: cfg.clone(), shards, class_mix, sizes, validation, test })
}
