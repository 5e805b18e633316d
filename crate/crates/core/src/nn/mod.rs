//! Small f32 neural-network toolkit with explicit forward caches and
//! hand-written backward passes. Activations are NHWC; convolutions run as
//! im2col followed by a single GEMM.

mod layers;
mod param;

pub use layers::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm2d, BnCache, Conv2d,
    ConvCache, Linear, LinearCache, MaxPool2d, PoolCache,
};
pub use param::{Module, Param, ParamKind};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Forward-pass mode: batch statistics and running-stat updates in `Train`,
/// frozen running statistics in `Eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// NHWC activation tensor. A 2-D matrix is stored as `n × 1 × 1 × c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(n: usize, h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * h * w * c {
            return Err(Error::ShapeViolation(format!(
                "{} values for tensor {n}x{h}x{w}x{c}",
                data.len()
            )));
        }
        Ok(Self { n, h, w, c, data })
    }

    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            n,
            h,
            w,
            c,
            data: vec![0.0; n * h * w * c],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(rows, 1, 1, cols, data)
    }

    /// Rows of the flattened `(n·h·w) × c` view.
    pub fn rows(&self) -> usize {
        self.n * self.h * self.w
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.h, self.w, self.c)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-major `C = op(A)·op(B) + beta·C` where `op(A)` is `m×k` and `op(B)`
/// is `k×n`. A transposed operand is stored as its untransposed transpose.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    beta: f32,
    c: &mut [f32],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above pin every slice to the extent the strides
    // address, and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Lcg64;

    fn naive(m: usize, k: usize, n: usize, a: &[f32], at: bool, b: &[f32], bt: bool) -> Vec<f32> {
        let mut c = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0f64;
                for p in 0..k {
                    let av = if at { a[p * m + i] } else { a[i * k + p] };
                    let bv = if bt { b[j * k + p] } else { b[p * n + j] };
                    s += av as f64 * bv as f64;
                }
                c[i * n + j] = s as f32;
            }
        }
        c
    }

    #[test]
    fn gemm_all_transpose_combinations() {
        let mut rng = Lcg64::new(1);
        let (m, k, n) = (7, 5, 9);
        let a: Vec<f32> = (0..m * k).map(|_| rng.normal() as f32).collect();
        let b: Vec<f32> = (0..k * n).map(|_| rng.normal() as f32).collect();
        for &(at, bt) in &[(false, false), (true, false), (false, true), (true, true)] {
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, &a, at, &b, bt, 0.0, &mut c);
            let want = naive(m, k, n, &a, at, &b, bt);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-4);
            }
        }
    }
}
