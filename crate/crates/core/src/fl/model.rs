//! Split model: a dense tanh feature extractor shared in shape by every
//! task, followed by a per-task linear softmax head. Parameters are flat
//! vectors; backprop is written out by hand.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes of the split model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input: usize,
    /// Widths of the tanh extractor layers; empty means the identity.
    pub hidden: Vec<usize>,
    pub classes: usize,
}

/// Row-major samples with integer labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// The samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset { dim: self.dim, x, y: idx.iter().map(|&i| self.y[i]).collect() }
    }
}

/// Mean loss and accuracy on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eval {
    pub loss: f64,
    pub accuracy: f64,
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.classes < 2 || self.hidden.contains(&0) {
            return Err(Error::Config("model needs input > 0, classes >= 2 and non-empty layers".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each extractor layer.
    fn layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.input).chain(self.hidden.iter().copied()).zip(self.hidden.iter().copied())
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input)
    }

    pub fn extractor_len(&self) -> usize {
        self.layers().map(|(i, o)| o * i + o).sum()
    }

    pub fn head_len(&self) -> usize {
        self.classes * self.feature_dim() + self.classes
    }

    pub fn param_count(&self) -> usize {
        self.extractor_len() + self.head_len()
    }

    /// Multiply-adds of one forward pass.
    pub fn forward_macs(&self) -> usize {
        self.layers().map(|(i, o)| i * o).sum::<usize>() + self.feature_dim() * self.classes
    }

    /// Floating-point operations to train on one sample (forward plus a
    /// backward pass costing twice as much, two flops per multiply-add).
    pub fn train_flops_per_sample(&self) -> f64 {
        6.0 * self.forward_macs() as f64
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init(&self, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let mut dense = |fan_in: usize, fan_out: usize, out: &mut Vec<f64>| {
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let u = Uniform::new_inclusive(-lim, lim).expect("finite bounds");
            out.extend((0..fan_in * fan_out).map(|_| u.sample(rng)));
            out.extend(std::iter::repeat_n(0.0, fan_out));
        };
        let mut ext = Vec::with_capacity(self.extractor_len());
        for (i, o) in self.layers() {
            dense(i, o, &mut ext);
        }
        let mut head = Vec::with_capacity(self.head_len());
        dense(self.feature_dim(), self.classes, &mut head);
        (ext, head)
    }

    /// Activations of every extractor layer for one input, input first.
    fn forward(&self, ext: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        for (fan_in, fan_out) in self.layers() {
            let (w, rest) = ext[off..].split_at(fan_in * fan_out);
            let b = &rest[..fan_out];
            let prev = acts.last().expect("input pushed");
            let next: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    (b[o] + dot(row, prev)).tanh()
                })
                .collect();
            acts.push(next);
            off += fan_in * fan_out + fan_out;
        }
        acts
    }

    /// Extractor output for one input.
    pub fn features(&self, ext: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(ext, x).pop().expect("at least the input")
    }

    /// Head logits for a feature vector.
    pub fn logits(&self, head: &[f64], feat: &[f64]) -> Vec<f64> {
        let d = self.feature_dim();
        let (w, b) = head.split_at(self.classes * d);
        (0..self.classes).map(|c| b[c] + dot(&w[c * d..(c + 1) * d], feat)).collect()
    }

    /// Mean cross-entropy over `data` and its gradients, accumulated into
    /// `g_ext` and `g_head` (which are overwritten).
    pub fn loss_and_grad(
        &self,
        ext: &[f64],
        head: &[f64],
        data: &Dataset,
        g_ext: &mut [f64],
        g_head: &mut [f64],
    ) -> f64 {
        g_ext.iter_mut().for_each(|g| *g = 0.0);
        g_head.iter_mut().for_each(|g| *g = 0.0);
        let d = self.feature_dim();
        let mut total = 0.0;
        for s in 0..data.len() {
            let acts = self.forward(ext, data.row(s));
            let feat = acts.last().expect("features");
            let p = softmax(&self.logits(head, feat));
            let y = data.y[s];
            total -= p[y].max(f64::MIN_POSITIVE).ln();

            // Head.
            let mut dz: Vec<f64> = p;
            dz[y] -= 1.0;
            let (gw, gb) = g_head.split_at_mut(self.classes * d);
            let mut da = vec![0.0; d];
            for c in 0..self.classes {
                gb[c] += dz[c];
                let wrow = &head[c * d..(c + 1) * d];
                for k in 0..d {
                    gw[c * d + k] += dz[c] * feat[k];
                    da[k] += dz[c] * wrow[k];
                }
            }

            // Extractor layers, last to first.
            let mut end = self.extractor_len();
            for (l, (fan_in, fan_out)) in self.layers().collect::<Vec<_>>().into_iter().enumerate().rev() {
                let start = end - (fan_in * fan_out + fan_out);
                let out = &acts[l + 1];
                let inp = &acts[l];
                let dpre: Vec<f64> = da.iter().zip(out).map(|(g, a)| g * (1.0 - a * a)).collect();
                let w = &ext[start..start + fan_in * fan_out];
                let (gw, gb) = g_ext[start..end].split_at_mut(fan_in * fan_out);
                let mut next = vec![0.0; fan_in];
                for o in 0..fan_out {
                    gb[o] += dpre[o];
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    for i in 0..fan_in {
                        gw[o * fan_in + i] += dpre[o] * inp[i];
                        next[i] += dpre[o] * row[i];
                    }
                }
                da = next;
                end = start;
            }
        }
        let n = data.len().max(1) as f64;
        g_ext.iter_mut().chain(g_head.iter_mut()).for_each(|g| *g /= n);
        total / n
    }

    /// Mean cross-entropy and accuracy.
    pub fn evaluate(&self, ext: &[f64], head: &[f64], data: &Dataset) -> Eval {
        if data.is_empty() {
            return Eval { loss: 0.0, accuracy: 0.0 };
        }
        let mut loss = 0.0;
        let mut hits = 0usize;
        for s in 0..data.len() {
            let z = self.logits(head, &self.features(ext, data.row(s)));
            let p = softmax(&z);
            let y = data.y[s];
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            let pred = (0..z.len()).fold(0, |best, c| if z[c] > z[best] { c } else { best });
            hits += usize::from(pred == y);
        }
        let n = data.len() as f64;
        Eval { loss: loss / n, accuracy: hits as f64 / n }
    }
}

/// Dot product over four independent lanes, which the compiler can keep in
/// vector registers.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
