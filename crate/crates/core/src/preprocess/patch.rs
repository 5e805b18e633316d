use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{View, VIEW_SIZE};
use crate::{Error, Result};

pub const PATCH_SIZE: usize = 32;
pub const PATCH_STRIDE: usize = 16;
pub const GRID_SIDE: usize = (VIEW_SIZE - PATCH_SIZE) / PATCH_STRIDE + 1;
pub const N_PATCHES: usize = GRID_SIDE * GRID_SIDE;

const PATCH_LEN: usize = PATCH_SIZE * PATCH_SIZE;

/// The 13×13 grid of overlapping 32×32 patches of one view, row-major by
/// grid position; patch `(r, c)` covers rows `[16r, 16r+32)` and columns
/// `[16c, 16c+32)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    data: Vec<f32>,
}

impl PatchGrid {
    /// Build from `N_PATCHES` contiguous 32×32 patches.
    pub fn from_patches(data: Vec<f32>) -> Result<Self> {
        if data.len() != N_PATCHES * PATCH_LEN {
            return Err(Error::ShapeViolation(format!(
                "{} values for {N_PATCHES} patches of {PATCH_SIZE}x{PATCH_SIZE}",
                data.len()
            )));
        }
        Ok(Self { data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / PATCH_LEN
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (GRID_SIDE, GRID_SIDE)
    }

    pub fn patch(&self, r: usize, c: usize) -> &[f32] {
        self.patch_at(r * GRID_SIDE + c)
    }

    pub fn patch_at(&self, index: usize) -> &[f32] {
        &self.data[index * PATCH_LEN..(index + 1) * PATCH_LEN]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Overlap-add reconstruction: every view pixel is the mean of all
    /// patch samples that cover it.
    pub fn reconstruct(&self) -> Vec<f32> {
        let mut sum = vec![0.0f64; VIEW_SIZE * VIEW_SIZE];
        let mut count = vec![0u32; VIEW_SIZE * VIEW_SIZE];
        for r in 0..GRID_SIDE {
            for c in 0..GRID_SIDE {
                let p = self.patch(r, c);
                for py in 0..PATCH_SIZE {
                    for px in 0..PATCH_SIZE {
                        let idx = (r * PATCH_STRIDE + py) * VIEW_SIZE + c * PATCH_STRIDE + px;
                        sum[idx] += p[py * PATCH_SIZE + px] as f64;
                        count[idx] += 1;
                    }
                }
            }
        }
        sum.iter()
            .zip(&count)
            .map(|(&s, &n)| (s / n as f64) as f32)
            .collect()
    }
}

pub fn patchify(view: &View) -> Result<PatchGrid> {
    if view.width() != VIEW_SIZE || view.height() != VIEW_SIZE {
        return Err(Error::ShapeViolation(format!(
            "patchify expects a {VIEW_SIZE}x{VIEW_SIZE} view, got {}x{}",
            view.width(),
            view.height()
        )));
    }
    let src = view.pixels();
    let mut data = Vec::with_capacity(N_PATCHES * PATCH_LEN);
    for r in 0..GRID_SIDE {
        for c in 0..GRID_SIDE {
            for py in 0..PATCH_SIZE {
                let start = (r * PATCH_STRIDE + py) * VIEW_SIZE + c * PATCH_STRIDE;
                data.extend_from_slice(&src[start..start + PATCH_SIZE]);
            }
        }
    }
    Ok(PatchGrid { data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Lcg64;

    fn random_view(seed: u64) -> View {
        let mut rng = Lcg64::new(seed);
        let px = (0..VIEW_SIZE * VIEW_SIZE)
            .map(|_| rng.uniform(-1.0, 1.0) as f32)
            .collect();
        View::new(VIEW_SIZE, VIEW_SIZE, px, None).unwrap()
    }

    #[test]
    fn geometry() {
        assert_eq!(GRID_SIDE, 13);
        assert_eq!(N_PATCHES, 169);
        let g = patchify(&random_view(1)).unwrap();
        assert_eq!(g.len(), 169);
        assert_eq!(g.grid_shape(), (13, 13));
    }

    #[test]
    fn corner_and_interior_patches_match_view_windows() {
        let v = random_view(2);
        let g = patchify(&v).unwrap();
        for &(r, c) in &[(0, 0), (5, 7), (12, 12)] {
            let p = g.patch(r, c);
            for y in 0..PATCH_SIZE {
                for x in 0..PATCH_SIZE {
                    let src = v.pixels()[(16 * r + y) * VIEW_SIZE + 16 * c + x];
                    assert_eq!(p[y * PATCH_SIZE + x], src);
                }
            }
        }
    }

    #[test]
    fn overlap_add_reconstructs_view() {
        let v = random_view(3);
        let rec = patchify(&v).unwrap().reconstruct();
        let err = rec
            .iter()
            .zip(v.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn wrong_size_is_rejected() {
        let v = View::new(10, 10, vec![0.0; 100], None).unwrap();
        assert!(matches!(patchify(&v), Err(Error::ShapeViolation(_))));
    }
}
