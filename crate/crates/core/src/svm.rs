//! Multi-class RBF support vector machine.
//!
//! Binary C-SVC problems are solved with SMO using second-order working set
//! selection; classes are combined one-vs-one with majority voting. Inputs
//! are L2-normalized before fitting and prediction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

const TAU: f64 = 1e-12;
/// Decision values this close to zero count as ties.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `1 / (D · Var(X))` over all entries of the normalized training set.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: Gamma,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: Gamma::Scale,
            tolerance: 1e-3,
            max_iter: 100_000,
        }
    }
}

/// Rows scaled to unit L2 norm; zero rows stay zero.
pub fn l2_normalize_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    libm::exp(-gamma * sq_dist(a, b))
}

/// Solution of one binary problem with labels `y ∈ {+1, −1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    /// Indices into the training rows with nonzero `α`.
    pub support: Vec<usize>,
    /// `α_i · y_i` for each support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn decision(&self, rows: &Matrix, x: &[f64], gamma: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(&i, &c)| c * rbf(rows.row(i), x, gamma))
            .sum::<f64>()
            - self.rho
    }
}

/// SMO on a precomputed kernel matrix `k` (row-major, `n × n`).
pub fn solve_binary(k: &[f64], y: &[f64], c: f64, tolerance: f64, max_iter: usize) -> BinarySvm {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mut alpha = vec![0.0f64; n];
    let mut g = vec![-1.0f64; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;
    while iter < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -g[t] >= gmax {
                    gmax = -g[t];
                    i_sel = t;
                }
            } else if !lower(alpha[t]) && g[t] >= gmax {
                gmax = g[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            let i = i_sel;
            for t in 0..n {
                let (grad_diff, quad) = if y[t] > 0.0 {
                    if lower(alpha[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(g[t]);
                    (gmax + g[t], k[i * n + i] + k[t * n + t] - 2.0 * y[i] * q(i, t))
                } else {
                    if upper(alpha[t]) {
                        continue;
                    }
                    gmax2 = gmax2.max(-g[t]);
                    (gmax - g[t], k[i * n + i] + k[t * n + t] + 2.0 * y[i] * q(i, t))
                };
                if grad_diff > 0.0 {
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < tolerance {
            break;
        }
        iter += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = k[i * n + i] + k[j * n + j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k[i * n + i] + k[j * n + j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            g[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * g[t];
        let bound_up = if upper(alpha[t]) {
            y[t] < 0.0
        } else if lower(alpha[t]) {
            y[t] > 0.0
        } else {
            n_free += 1;
            sum_free += yg;
            continue;
        };
        if bound_up {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let support: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let coef = support.iter().map(|&t| alpha[t] * y[t]).collect();
    BinarySvm {
        support,
        coef,
        rho,
        iterations: iter,
    }
}

/// One-vs-one RBF classifier over writer ids.
#[derive(Debug, Clone, PartialEq)]
pub struct WriterClassifier {
    /// Sorted, distinct writer ids.
    pub classes: Vec<String>,
    pub gamma: f64,
    /// Normalized training rows.
    pub rows: Matrix,
    /// `(a, b, model)` with class `a` as the positive label, `a < b`.
    pub models: Vec<(usize, usize, Vec<usize>, BinarySvm)>,
}

pub fn scale_gamma(x: &Matrix) -> f64 {
    let v = x.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.cols() as f64 * var)
    } else {
        1.0
    }
}

pub fn fit_writer_svm(features: &Matrix, writer_ids: &[String], cfg: &SvmConfig) -> Result<WriterClassifier> {
    if features.rows() != writer_ids.len() {
        return Err(Error::ShapeViolation(format!(
            "{} feature rows but {} writer ids",
            features.rows(),
            writer_ids.len()
        )));
    }
    let mut classes: Vec<String> = writer_ids.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::NeedTwoClasses(classes.len()));
    }
    if !(cfg.c > 0.0) {
        return Err(Error::InvalidArgument(format!("SVM C must be positive, got {}", cfg.c)));
    }
    let rows = l2_normalize_rows(features);
    let gamma = match cfg.gamma {
        Gamma::Scale => scale_gamma(&rows),
        Gamma::Value(g) if g > 0.0 => g,
        Gamma::Value(g) => return Err(Error::InvalidArgument(format!("gamma must be positive, got {g}"))),
    };
    let label: Vec<usize> = writer_ids
        .iter()
        .map(|w| classes.binary_search(w).unwrap_or(0))
        .collect();
    let mut models = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            let idx: Vec<usize> = (0..rows.rows()).filter(|&r| label[r] == a || label[r] == b).collect();
            let y: Vec<f64> = idx.iter().map(|&r| if label[r] == a { 1.0 } else { -1.0 }).collect();
            let m = idx.len();
            let mut k = vec![0.0; m * m];
            for p in 0..m {
                for q in p..m {
                    let v = rbf(rows.row(idx[p]), rows.row(idx[q]), gamma);
                    k[p * m + q] = v;
                    k[q * m + p] = v;
                }
            }
            let mut svm = solve_binary(&k, &y, cfg.c, cfg.tolerance, cfg.max_iter);
            // remap support indices to global rows
            svm.support = svm.support.iter().map(|&s| idx[s]).collect();
            models.push((a, b, idx, svm));
        }
    }
    Ok(WriterClassifier {
        classes,
        gamma,
        rows,
        models,
    })
}

impl WriterClassifier {
    pub fn class_index(&self, writer: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(writer)).ok()
    }

    /// Vote counts per class for one raw (unnormalized) feature vector.
    pub fn votes(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.rows.cols() {
            return Err(Error::ShapeViolation(format!(
                "feature has {} dimensions, classifier expects {}",
                x.len(),
                self.rows.cols()
            )));
        }
        let n = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
        let xn: Vec<f64> = if n > 0.0 { x.iter().map(|v| v / n).collect() } else { x.to_vec() };
        let mut votes = vec![0usize; self.classes.len()];
        for (a, b, _, svm) in &self.models {
            let f = svm.decision(&self.rows, &xn, self.gamma);
            // ties go to the smaller writer id, which is `a`
            if f >= -TIE_EPS {
                votes[*a] += 1;
            } else {
                votes[*b] += 1;
            }
        }
        Ok(votes)
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        let votes = self.votes(x)?;
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        Ok(&self.classes[best])
    }
}
