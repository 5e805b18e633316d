//! Patch-grid encoder: every patch of a grid goes through the backbone as one
//! flat batch, the 169 per-patch vectors of each image are averaged (global
//! average pooling over the 13×13 reassembly), and a one-hidden-layer
//! projector maps the pooled vector to the objective space.

mod backbone;

pub use backbone::{Backbone, BackboneCache, BackboneKind, ResNet18, TinyCnn, EMBED_DIM, TINY_WIDTHS};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{relu, relu_backward, Linear, LinearCache, Mode, Module, Param, Tensor};
use crate::preprocess::{PatchGrid, N_PATCHES, PATCH_SIZE};
use crate::{Error, Lcg64, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub backbone: BackboneKind,
    /// 1 for native grayscale, 3 to replicate the gray channel.
    pub in_channels: usize,
    pub projector_hidden: usize,
    pub bn_momentum: f32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::ResNet18,
            in_channels: 1,
            projector_hidden: EMBED_DIM,
            bn_momentum: 0.1,
        }
    }
}

impl EncoderConfig {
    /// Canonical text describing everything that fixes the parameter layout.
    pub fn canonical(&self) -> String {
        format!(
            "backbone={};in_channels={};embed_dim={};projector_hidden={}",
            self.backbone.name(),
            self.in_channels,
            EMBED_DIM,
            self.projector_hidden
        )
    }

    /// 64-bit FNV-1a of [`EncoderConfig::canonical`].
    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical().as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pooled,
    Projected,
    NormalizedCentered,
}

/// `N × D` embeddings tagged with the pipeline stage that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub values: Matrix,
    pub stage: Stage,
}

/// `N × 169 × 512` per-patch encodings, sample-major then grid row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbeddings {
    pub n: usize,
    pub values: Vec<f32>,
}

impl PatchEmbeddings {
    pub fn new(n: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != n * N_PATCHES * EMBED_DIM {
            return Err(Error::ShapeViolation(format!(
                "{} values for {n} x {N_PATCHES} x {EMBED_DIM} patch embeddings",
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn patch(&self, sample: usize, index: usize) -> &[f32] {
        let off = (sample * N_PATCHES + index) * EMBED_DIM;
        &self.values[off..off + EMBED_DIM]
    }
}

/// Mean of the 169 patch vectors of each sample.
pub fn grid_pool(pe: &PatchEmbeddings) -> Result<EmbeddingBatch> {
    if pe.values.len() != pe.n * N_PATCHES * EMBED_DIM {
        return Err(Error::ShapeViolation(format!(
            "grid_pool expects {N_PATCHES} patches of {EMBED_DIM} per sample"
        )));
    }
    let mut out = Matrix::zeros(pe.n, EMBED_DIM);
    for s in 0..pe.n {
        let row = out.row_mut(s);
        for p in 0..N_PATCHES {
            for (o, &v) in row.iter_mut().zip(pe.patch(s, p)) {
                *o += v as f64;
            }
        }
        for o in row.iter_mut() {
            *o /= N_PATCHES as f64;
        }
    }
    Ok(EmbeddingBatch {
        values: out,
        stage: Stage::Pooled,
    })
}

/// affine → ReLU → affine
#[derive(Debug, Clone)]
pub struct Projector {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug)]
pub struct ProjectorCache {
    fc1: LinearCache,
    hidden: Tensor,
    fc2: LinearCache,
}

impl Projector {
    pub fn new(d_in: usize, hidden: usize, d_out: usize, rng: &mut Lcg64) -> Self {
        Self {
            fc1: Linear::new("projector.fc1", d_in, hidden, rng),
            fc2: Linear::new("projector.fc2", hidden, d_out, rng),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<(Tensor, ProjectorCache)> {
        let (mut h, fc1) = self.fc1.forward(x)?;
        relu(&mut h);
        let (y, fc2) = self.fc2.forward(&h)?;
        Ok((
            y,
            ProjectorCache {
                fc1,
                hidden: h,
                fc2,
            },
        ))
    }

    fn backward(&mut self, cache: &ProjectorCache, dy: &Tensor) -> Tensor {
        let mut dh = self.fc2.backward(&cache.fc2, dy);
        relu_backward(&cache.hidden, &mut dh);
        self.fc1.backward(&cache.fc1, &dh)
    }
}

impl Module for Projector {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.fc1.visit(f);
        self.fc2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
pub struct PatchEncoder {
    pub config: EncoderConfig,
    pub backbone: Backbone,
    pub projector: Projector,
}

/// Everything the backward pass needs from one training forward.
#[derive(Debug)]
pub struct ForwardCache {
    backbone: BackboneCache,
    projector: ProjectorCache,
    n: usize,
}

fn matrix_to_tensor(m: &Matrix) -> Result<Tensor> {
    Tensor::matrix(m.rows(), m.cols(), m.as_slice().iter().map(|&v| v as f32).collect())
}

fn tensor_to_matrix(t: &Tensor) -> Result<Matrix> {
    Matrix::from_vec(t.rows(), t.c, t.data.iter().map(|&v| v as f64).collect())
}

impl PatchEncoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        if config.in_channels != 1 && config.in_channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "in_channels must be 1 or 3, got {}",
                config.in_channels
            )));
        }
        let mut rng = Lcg64::new(seed);
        let backbone = Backbone::new(config.backbone, config.in_channels, config.bn_momentum, &mut rng);
        let projector = Projector::new(EMBED_DIM, config.projector_hidden, EMBED_DIM, &mut rng);
        Ok(Self {
            config,
            backbone,
            projector,
        })
    }

    fn patch_tensor(&self, grids: &[PatchGrid]) -> Result<Tensor> {
        let c = self.config.in_channels;
        let mut data = Vec::with_capacity(grids.len() * N_PATCHES * PATCH_SIZE * PATCH_SIZE * c);
        for g in grids {
            if g.len() != N_PATCHES {
                return Err(Error::ShapeViolation(format!(
                    "expected {N_PATCHES} patches per grid, got {}",
                    g.len()
                )));
            }
            if c == 1 {
                data.extend_from_slice(g.as_slice());
            } else {
                for &v in g.as_slice() {
                    data.extend(core::iter::repeat(v).take(c));
                }
            }
        }
        Tensor::new(grids.len() * N_PATCHES, PATCH_SIZE, PATCH_SIZE, c, data)
    }

    /// Encode every patch of every grid: `N × 169 × 512`.
    pub fn encode_patches(&mut self, grids: &[PatchGrid], mode: Mode) -> Result<PatchEmbeddings> {
        let x = self.patch_tensor(grids)?;
        let (y, _) = self.backbone.forward(&x, mode)?;
        PatchEmbeddings::new(grids.len(), y.data)
    }

    pub fn project(&self, pooled: &EmbeddingBatch) -> Result<EmbeddingBatch> {
        if pooled.stage != Stage::Pooled {
            return Err(Error::InvalidArgument(format!(
                "project expects pooled embeddings, got {:?}",
                pooled.stage
            )));
        }
        let (y, _) = self.projector.forward(&matrix_to_tensor(&pooled.values)?)?;
        Ok(EmbeddingBatch {
            values: tensor_to_matrix(&y)?,
            stage: Stage::Projected,
        })
    }

    /// Pooled (pre-projector) embeddings in evaluation mode.
    pub fn embed(&mut self, grids: &[PatchGrid], stage: Stage) -> Result<EmbeddingBatch> {
        let pooled = grid_pool(&self.encode_patches(grids, Mode::Eval)?)?;
        match stage {
            Stage::Pooled => Ok(pooled),
            Stage::Projected => self.project(&pooled),
            Stage::NormalizedCentered => Err(Error::InvalidArgument(String::from(
                "normalized-centered embeddings depend on the batch; normalize projected outputs instead",
            ))),
        }
    }

    /// Training forward returning pooled and projected embeddings plus the
    /// cache for [`PatchEncoder::backward`].
    pub fn forward_train(&mut self, grids: &[PatchGrid]) -> Result<(EmbeddingBatch, EmbeddingBatch, ForwardCache)> {
        let x = self.patch_tensor(grids)?;
        let (patch_emb, backbone) = self.backbone.forward(&x, Mode::Train)?;
        let pooled = grid_pool(&PatchEmbeddings::new(grids.len(), patch_emb.data)?)?;
        let (proj, projector) = self.projector.forward(&matrix_to_tensor(&pooled.values)?)?;
        let projected = EmbeddingBatch {
            values: tensor_to_matrix(&proj)?,
            stage: Stage::Projected,
        };
        Ok((
            pooled,
            projected,
            ForwardCache {
                backbone,
                projector,
                n: grids.len(),
            },
        ))
    }

    /// Accumulate parameter gradients given `dL/d(projected)`.
    pub fn backward(&mut self, cache: ForwardCache, d_projected: &Matrix) -> Result<()> {
        if d_projected.shape() != (cache.n, EMBED_DIM) {
            return Err(Error::ShapeViolation(format!(
                "gradient shape {:?} does not match {} x {EMBED_DIM}",
                d_projected.shape(),
                cache.n
            )));
        }
        let d_pooled = self.projector.backward(&cache.projector, &matrix_to_tensor(d_projected)?);
        // each patch receives 1/169 of its sample's pooled gradient
        let scale = 1.0 / N_PATCHES as f32;
        let mut d_patch = vec![0.0f32; cache.n * N_PATCHES * EMBED_DIM];
        for s in 0..cache.n {
            let g = &d_pooled.data[s * EMBED_DIM..(s + 1) * EMBED_DIM];
            for p in 0..N_PATCHES {
                let off = (s * N_PATCHES + p) * EMBED_DIM;
                for (d, &gv) in d_patch[off..off + EMBED_DIM].iter_mut().zip(g) {
                    *d = gv * scale;
                }
            }
        }
        let d = Tensor::matrix(cache.n * N_PATCHES, EMBED_DIM, d_patch)?;
        self.backbone.backward(cache.backbone, &d);
        Ok(())
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name.clone(), p.shape.clone(), p.value.clone())));
        out
    }

    /// Overwrite every tensor from `(name, shape, values)` entries; names and
    /// shapes must match exactly.
    pub fn load_tensors(&mut self, tensors: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        let mut err = None;
        let mut seen = 0usize;
        self.visit_mut(&mut |p| {
            match tensors.iter().find(|(n, _, _)| *n == p.name) {
                Some((_, shape, v)) if *shape == p.shape && v.len() == p.value.len() => {
                    p.value.copy_from_slice(v);
                    seen += 1;
                }
                Some(_) => {
                    err.get_or_insert(Error::ShapeViolation(format!("tensor {} has the wrong shape", p.name)));
                }
                None => {
                    err.get_or_insert(Error::InvalidArgument(format!("missing tensor {}", p.name)));
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if seen != tensors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} unexpected tensors",
                tensors.len() - seen
            )));
        }
        Ok(())
    }
}

impl Module for PatchEncoder {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.backbone.visit(f);
        self.projector.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.backbone.visit_mut(f);
        self.projector.visit_mut(f);
    }
}
