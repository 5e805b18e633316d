//! Exact t-SNE for small point sets.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Lcg64, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
        }
    }
}

fn sq_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional affinities with per-point bandwidths found by bisection so
/// that each row has the requested perplexity, then symmetrized.
pub fn joint_probabilities(x: &Matrix, perplexity: f64) -> Vec<f64> {
    let n = x.rows();
    let d = sq_distances(x);
    let target = libm::log(perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let (mut beta, mut lo, mut hi) = (1.0f64, f64::NEG_INFINITY, f64::INFINITY);
        let row = &d[i * n..(i + 1) * n];
        for _ in 0..100 {
            let mut sum = 0.0;
            let mut dsum = 0.0;
            for j in 0..n {
                if j != i {
                    let v = libm::exp(-row[j] * beta);
                    p[i * n + j] = v;
                    sum += v;
                    dsum += row[j] * v;
                }
            }
            let sum = sum.max(1e-300);
            let entropy = libm::log(sum) + beta * dsum / sum;
            for j in 0..n {
                p[i * n + j] /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
            }
        }
    }
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                joint[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    joint
}

/// Embed the rows of `x` in two dimensions.
pub fn tsne(x: &Matrix, cfg: &TsneConfig, seed: u64) -> Result<Matrix> {
    let n = x.rows();
    if !(cfg.perplexity > 0.0) {
        return Err(Error::InvalidArgument(format!("perplexity must be positive, got {}", cfg.perplexity)));
    }
    if (n as f64) <= 3.0 * cfg.perplexity {
        return Err(Error::InsufficientSamples(format!(
            "t-SNE with perplexity {} needs more than {} samples, got {n}",
            cfg.perplexity,
            3.0 * cfg.perplexity
        )));
    }
    let p = joint_probabilities(x, cfg.perplexity);
    let mut rng = Lcg64::new(seed);
    let mut y: Vec<f64> = (0..2 * n).map(|_| 1e-4 * rng.normal()).collect();
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![0.0; 2 * n];
    for it in 0..cfg.iterations {
        let exag = if it < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if it < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let (dx, dy) = (y[2 * i] - y[2 * j], y[2 * i + 1] - y[2 * j + 1]);
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                z += 2.0 * v;
            }
        }
        let z = z.max(1e-300);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i * n + j] / z).max(1e-12);
                let m = 4.0 * (exag * p[i * n + j] - q) * num[i * n + j];
                grad[2 * i] += m * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += m * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                gains[k] * 0.8
            };
            gains[k] = gains[k].max(0.01);
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        // keep the embedding centred
        for c in 0..2 {
            let mean = (0..n).map(|i| y[2 * i + c]).sum::<f64>() / n as f64;
            (0..n).for_each(|i| y[2 * i + c] -= mean);
        }
    }
    Matrix::from_vec(n, 2, y)
}

/// Mean silhouette coefficient of a labelled point set.
pub fn silhouette(x: &Matrix, labels: &[usize]) -> f64 {
    let n = x.rows();
    let d: Vec<f64> = sq_distances(x).into_iter().map(libm::sqrt).collect();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += d[i * n + j];
                counts[labels[j]] += 1;
            }
        }
        if counts[labels[i]] == 0 {
            continue;
        }
        let a = sums[labels[i]] / counts[labels[i]] as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}
