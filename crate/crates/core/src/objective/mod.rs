//! Decorrelation objective on positive-pair embeddings.
//!
//! Each embedding column is first scaled to unit L2 norm over the batch and
//! then centred. With `Z` and `Z'` the two normalized views (rows aligned by
//! parent image) the pseudo cross-covariance is `C = ZᵀZ'` and the loss is
//!
//! ```text
//! L = (1/N) Σ_i Σ_{j≠i} C_ij²  +  (1/N) Σ_i (C_ii − 1)²
//! ```
//!
//! evaluated in the single ordering `(Z, Z')`. An NT-Xent loss is provided as
//! the contrastive baseline.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Matrix, Result};

/// Denominator guard for zero-norm columns (or rows).
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Each dimension scaled to unit norm across the batch, then centred.
    #[default]
    PerDimension,
    /// Each embedding scaled onto the unit sphere, then dimensions centred.
    PerVector,
}

/// Output of normalization plus what the backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    /// Centred output.
    pub z: Matrix,
    /// Unit-norm values before centering.
    pub scaled: Matrix,
    /// Per-column (or per-row) norms actually divided by, after the guard.
    pub norms: Vec<f64>,
    /// Number of columns (rows) whose norm fell under the guard.
    pub degenerate: usize,
    pub mode: Normalization,
}

fn check_nonempty(raw: &Matrix) -> Result<()> {
    if raw.rows() == 0 || raw.cols() == 0 {
        return Err(Error::ShapeViolation(format!(
            "cannot normalize an empty {}x{} batch",
            raw.rows(),
            raw.cols()
        )));
    }
    Ok(())
}

fn center_columns(m: &mut Matrix) {
    let n = m.rows() as f64;
    for c in 0..m.cols() {
        let mean = (0..m.rows()).map(|r| m[(r, c)]).sum::<f64>() / n;
        for r in 0..m.rows() {
            m[(r, c)] -= mean;
        }
    }
}

/// Normalization with the `NORM_EPS` guard; degenerate columns are counted,
/// not rejected. A single-row batch centres to all zeros.
pub fn normalize_center_guarded(raw: &Matrix, mode: Normalization) -> Result<Normalized> {
    check_nonempty(raw)?;
    let (n, d) = raw.shape();
    let mut scaled = raw.clone();
    let mut degenerate = 0;
    let norms = match mode {
        Normalization::PerDimension => {
            let mut norms = Vec::with_capacity(d);
            for c in 0..d {
                let ss: f64 = (0..n).map(|r| raw[(r, c)] * raw[(r, c)]).sum();
                let mut s = libm::sqrt(ss);
                if s < NORM_EPS {
                    degenerate += 1;
                    s = NORM_EPS;
                }
                for r in 0..n {
                    scaled[(r, c)] /= s;
                }
                norms.push(s);
            }
            norms
        }
        Normalization::PerVector => {
            let mut norms = Vec::with_capacity(n);
            for r in 0..n {
                let row = scaled.row_mut(r);
                let mut s = libm::sqrt(row.iter().map(|v| v * v).sum());
                if s < NORM_EPS {
                    degenerate += 1;
                    s = NORM_EPS;
                }
                row.iter_mut().for_each(|v| *v /= s);
                norms.push(s);
            }
            norms
        }
    };
    let mut z = scaled.clone();
    center_columns(&mut z);
    Ok(Normalized {
        z,
        scaled,
        norms,
        degenerate,
        mode,
    })
}

/// Per-dimension batch normalization followed by centering; a zero-norm
/// column is an error.
pub fn normalize_center(raw: &Matrix) -> Result<Matrix> {
    let out = normalize_center_guarded(raw, Normalization::PerDimension)?;
    if out.degenerate > 0 {
        let index = out.norms.iter().position(|&s| s <= NORM_EPS).unwrap_or(0);
        return Err(Error::DegenerateDimension { index });
    }
    Ok(out.z)
}

/// Chain `dL/dz` back to `dL/d(raw)`.
pub fn normalize_center_backward(n: &Normalized, dz: &Matrix) -> Result<Matrix> {
    if dz.shape() != n.z.shape() {
        return Err(Error::ShapeViolation(format!(
            "gradient {:?} vs normalized batch {:?}",
            dz.shape(),
            n.z.shape()
        )));
    }
    // centering is a projection, so its adjoint re-centres the gradient
    let mut dy = dz.clone();
    center_columns(&mut dy);
    let y = &n.scaled;
    let (rows, cols) = y.shape();
    let mut dx = Matrix::zeros(rows, cols);
    match n.mode {
        Normalization::PerDimension => {
            for c in 0..cols {
                let s = n.norms[c];
                if s <= NORM_EPS {
                    for r in 0..rows {
                        dx[(r, c)] = dy[(r, c)] / s;
                    }
                    continue;
                }
                let proj: f64 = (0..rows).map(|r| y[(r, c)] * dy[(r, c)]).sum();
                for r in 0..rows {
                    dx[(r, c)] = (dy[(r, c)] - y[(r, c)] * proj) / s;
                }
            }
        }
        Normalization::PerVector => {
            for r in 0..rows {
                let s = n.norms[r];
                let yr = y.row(r);
                let gr = dy.row(r);
                let proj: f64 = if s <= NORM_EPS {
                    0.0
                } else {
                    yr.iter().zip(gr).map(|(a, b)| a * b).sum()
                };
                for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
                    *out = (gr[c] - yr[c] * proj) / s;
                }
            }
        }
    }
    Ok(dx)
}

/// `C = ZᵀZ'` over a batch of positive pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoCovMatrix {
    pub c: Matrix,
    pub n: usize,
}

impl PseudoCovMatrix {
    pub fn dim(&self) -> usize {
        self.c.rows()
    }

    pub fn mean_abs_offdiag(&self) -> f64 {
        let d = self.dim();
        if d < 2 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += libm::fabs(self.c[(i, j)]);
                }
            }
        }
        s / (d * (d - 1)) as f64
    }

    pub fn mean_diag(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|i| self.c[(i, i)]).sum::<f64>() / d as f64
    }
}

fn check_pair(z: &Matrix, z2: &Matrix) -> Result<()> {
    if z.shape() != z2.shape() {
        return Err(Error::ShapeViolation(format!(
            "view embeddings differ in shape: {:?} vs {:?}",
            z.shape(),
            z2.shape()
        )));
    }
    if z.rows() == 0 {
        return Err(Error::ShapeViolation("empty batch".into()));
    }
    Ok(())
}

pub fn pseudo_cross_cov(z: &Matrix, z2: &Matrix) -> Result<PseudoCovMatrix> {
    check_pair(z, z2)?;
    Ok(PseudoCovMatrix {
        c: z.t_matmul(z2)?,
        n: z.rows(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub on_diag: f64,
    pub off_diag: f64,
}

fn loss_from_cov(cov: &PseudoCovMatrix) -> LossValue {
    let d = cov.dim();
    let n = cov.n as f64;
    let (mut on, mut off) = (0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let v = cov.c[(i, j)];
            if i == j {
                on += (v - 1.0) * (v - 1.0);
            } else {
                off += v * v;
            }
        }
    }
    let (on_diag, off_diag) = (on / n, off / n);
    LossValue {
        total: on_diag + off_diag,
        on_diag,
        off_diag,
    }
}

/// Loss on already normalized-and-centred views.
pub fn swis_loss(z: &Matrix, z2: &Matrix) -> Result<LossValue> {
    Ok(loss_from_cov(&pseudo_cross_cov(z, z2)?))
}

/// Loss, `∂L/∂Z`, `∂L/∂Z'` and the covariance it was computed from.
pub fn swis_loss_grad(z: &Matrix, z2: &Matrix) -> Result<(LossValue, Matrix, Matrix, PseudoCovMatrix)> {
    let cov = pseudo_cross_cov(z, z2)?;
    let loss = loss_from_cov(&cov);
    // G = dL/dC = (2/N)(C − I)
    let mut g = cov.c.scale(2.0 / cov.n as f64);
    for i in 0..cov.dim() {
        g[(i, i)] -= 2.0 / cov.n as f64;
    }
    let dz = z2.matmul(&g.transpose())?;
    let dz2 = z.matmul(&g)?;
    Ok((loss, dz, dz2, cov))
}

fn nt_xent_core(views: &Matrix, temperature: f64, want_grad: bool) -> Result<(f64, Option<Matrix>)> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    let (m, d) = views.shape();
    if m < 2 || m % 2 != 0 {
        return Err(Error::ShapeViolation(format!(
            "NT-Xent needs an even number (>= 2) of rows, got {m}"
        )));
    }
    let norms: Vec<f64> = (0..m)
        .map(|r| libm::sqrt(views.row(r).iter().map(|v| v * v).sum::<f64>()).max(NORM_EPS))
        .collect();
    let u = Matrix::from_fn(m, d, |r, c| views[(r, c)] / norms[r]);
    let sim = u.matmul(&u.transpose())?;
    let partner = |i: usize| i ^ 1;
    let mut loss = 0.0;
    let mut a = Matrix::zeros(m, m);
    for i in 0..m {
        let logits: Vec<f64> = (0..m).map(|j| sim[(i, j)] / temperature).collect();
        let max = (0..m).filter(|&j| j != i).map(|j| logits[j]).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..m).filter(|&j| j != i).map(|j| libm::exp(logits[j] - max)).sum();
        let lse = max + libm::log(denom);
        loss += lse - logits[partner(i)];
        if want_grad {
            for j in (0..m).filter(|&j| j != i) {
                let p = libm::exp(logits[j] - lse);
                let target = if j == partner(i) { 1.0 } else { 0.0 };
                a[(i, j)] = (p - target) / m as f64;
            }
        }
    }
    loss /= m as f64;
    if !want_grad {
        return Ok((loss, None));
    }
    // dL/du_i = Σ_j (A_ij + A_ji) u_j / τ, then through row normalization
    let sym = Matrix::from_fn(m, m, |i, j| (a[(i, j)] + a[(j, i)]) / temperature);
    let du = sym.matmul(&u)?;
    let mut dx = Matrix::zeros(m, d);
    for r in 0..m {
        let ur = u.row(r);
        let gr = du.row(r);
        let proj: f64 = ur.iter().zip(gr).map(|(x, y)| x * y).sum();
        for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
            *out = (gr[c] - ur[c] * proj) / norms[r];
        }
    }
    Ok((loss, Some(dx)))
}

/// Normalized-temperature cross-entropy over cosine similarities, averaged
/// over all `2N` anchors. Rows `2k` and `2k+1` form a positive pair; with a
/// single pair there are no negatives and the loss is 0.
pub fn nt_xent_loss(views: &Matrix, temperature: f64) -> Result<f64> {
    nt_xent_core(views, temperature, false).map(|(l, _)| l)
}

pub fn nt_xent_loss_grad(views: &Matrix, temperature: f64) -> Result<(f64, Matrix)> {
    nt_xent_core(views, temperature, true).map(|(l, g)| (l, g.unwrap_or_else(|| Matrix::zeros(0, 0))))
}

/// Interleave two row-aligned view batches as `[a0, b0, a1, b1, ...]`.
pub fn interleave(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_pair(a, b)?;
    let mut data = Vec::with_capacity(a.rows() * a.cols() * 2);
    for r in 0..a.rows() {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    Matrix::from_vec(a.rows() * 2, a.cols(), data)
}

/// Inverse of [`interleave`].
pub fn deinterleave(m: &Matrix) -> (Matrix, Matrix) {
    let even: Vec<usize> = (0..m.rows()).step_by(2).collect();
    let odd: Vec<usize> = (1..m.rows()).step_by(2).collect();
    (m.select_rows(&even), m.select_rows(&odd))
}

#[cfg(test)]
mod tests;
