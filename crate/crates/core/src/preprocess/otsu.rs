use crate::{Error, GrayImage, Result};

pub fn histogram(image: &GrayImage) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &p in image.pixels() {
        h[p as usize] += 1;
    }
    h
}

/// Otsu's threshold: the `t` maximizing the between-class variance of the
/// split `{v <= t}` / `{v > t}`, smallest `t` on ties.
///
/// Scores are compared as exact rationals. With class counts `n0, n1` and
/// intensity sums `s0, s1`, the between-class variance is
/// `(s0·n1 − s1·n0)² / (n0·n1·n²)`; the common `n²` is dropped and the
/// remaining fractions are cross-multiplied in multi-word integers.
pub fn otsu_threshold(image: &GrayImage) -> Result<u8> {
    let hist = histogram(image);
    let n: u64 = hist.iter().sum();
    let total: u128 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as u128 * c as u128)
        .sum();

    let mut best: Option<(u8, u128, u64)> = None;
    let mut n0: u64 = 0;
    let mut s0: u128 = 0;
    for t in 0..=255usize {
        n0 += hist[t];
        s0 += t as u128 * hist[t] as u128;
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total - s0;
        let lhs = s0 * n1 as u128;
        let rhs = s1 * n0 as u128;
        let diff = lhs.abs_diff(rhs);
        if diff == 0 {
            continue;
        }
        let denom = n0 as u128 * n1 as u128;
        let better = match best {
            None => true,
            Some((_, bd, bn)) => {
                // diff²/denom > bd²/bdenom  <=>  diff²·bdenom > bd²·denom
                let bdenom = {
                    let b1 = n - bn;
                    bn as u128 * b1 as u128
                };
                cmp_sq_times(diff, bdenom) > cmp_sq_times(bd, denom)
            }
        };
        if better {
            best = Some((t as u8, diff, n0));
        }
    }
    best.map(|(t, _, _)| t).ok_or(Error::BlankImage)
}

/// `a² · b` as little-endian 64-bit limbs, compared most-significant first.
fn cmp_sq_times(a: u128, b: u128) -> Wide {
    let a_limbs = [a as u64, (a >> 64) as u64];
    let sq = mul_limbs(&a_limbs, &a_limbs);
    let b_limbs = [b as u64, (b >> 64) as u64];
    // a < 2^128 so a² fits in the low four limbs
    Wide(mul_limbs(&sq[..4], &b_limbs))
}

#[derive(PartialEq, Eq)]
struct Wide([u64; 8]);

impl PartialOrd for Wide {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Wide {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.0.iter().rev().cmp(other.0.iter().rev())
    }
}

fn mul_limbs(a: &[u64], b: &[u64]) -> [u64; 8] {
    let mut out = [0u64; 8];
    for (i, &x) in a.iter().enumerate() {
        let mut carry: u128 = 0;
        for (j, &y) in b.iter().enumerate() {
            let cur = out[i + j] as u128 + x as u128 * y as u128 + carry;
            out[i + j] = cur as u64;
            carry = cur >> 64;
        }
        let mut k = i + b.len();
        while carry != 0 {
            let cur = out[k] as u128 + carry;
            out[k] = cur as u64;
            carry = cur >> 64;
            k += 1;
        }
    }
    out
}
