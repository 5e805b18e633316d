//! Self-supervised pretraining loop.
//!
//! Each step draws a positive pair of views per image, encodes both views
//! with separate training-mode forward passes, normalizes the two projected
//! batches and backpropagates the objective through the shared encoder.

use alloc::vec::Vec;

use crate::encoder::PatchEncoder;
use crate::nn::Module;
use crate::objective::{
    deinterleave, interleave, normalize_center_backward, normalize_center_guarded, nt_xent_loss_grad,
    pseudo_cross_cov, swis_loss_grad, Normalization,
};
use crate::optim::{LarsConfig, OptimizerState};
use crate::preprocess::{make_view_pair, patchify, AugmentConfig, PatchGrid};
use crate::rng::derive_seed;
use crate::schedule::{lr_at, ScheduleConfig};
use crate::{Error, GrayImage, Lcg64, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Swis { normalization: Normalization },
    NtXent { temperature: f64 },
}

impl Default for Objective {
    fn default() -> Self {
        Objective::Swis {
            normalization: Normalization::PerDimension,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub objective: Objective,
    pub lars: LarsConfig,
    pub schedule: ScheduleConfig,
    pub augment: AugmentConfig,
    /// Seeds batch order.
    pub data_seed: u64,
    /// Seeds per-image augmentations.
    pub augment_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            objective: Objective::default(),
            lars: LarsConfig::default(),
            schedule: ScheduleConfig::default(),
            augment: AugmentConfig::default(),
            data_seed: 0,
            augment_seed: 0,
        }
    }
}

/// Diagnostics for one optimizer step.
///
/// `on_diag`, `off_diag`, `mean_abs_offdiag` and `mean_diag` always describe
/// the pseudo cross-covariance of the normalized projections. `total` is the
/// optimized objective, which equals `on_diag + off_diag` for the default
/// objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub on_diag: f64,
    pub off_diag: f64,
    pub mean_abs_offdiag: f64,
    pub mean_diag: f64,
    /// Columns that hit the normalization guard, summed over both views.
    pub degenerate: usize,
}

/// Shuffled mini-batches of `0..n` for one epoch. A trailing batch with a
/// single image is dropped because the objective needs at least two rows.
pub fn batch_order(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = Lcg64::new(derive_seed(seed, epoch as u64));
    let perm = rng.permutation(n);
    perm.chunks(batch_size.max(1))
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

/// Seed for the views of image `index` in `epoch`.
pub fn view_seed(augment_seed: u64, epoch: usize, index: usize) -> u64 {
    derive_seed(derive_seed(augment_seed, epoch as u64), index as u64)
}

pub struct Trainer {
    pub encoder: PatchEncoder,
    pub optimizer: OptimizerState,
    pub config: TrainConfig,
    pub step: u64,
}

impl Trainer {
    pub fn new(encoder: PatchEncoder, config: TrainConfig) -> Result<Self> {
        if config.batch_size < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "batch size must be at least 2, got {}",
                config.batch_size
            )));
        }
        let optimizer = OptimizerState::new(&encoder, config.lars);
        Ok(Self {
            encoder,
            optimizer,
            config,
            step: 0,
        })
    }

    /// Build both views for every image of a batch.
    pub fn view_grids(&self, crops: &[&GrayImage], seeds: &[u64]) -> Result<(Vec<PatchGrid>, Vec<PatchGrid>)> {
        let mut a = Vec::with_capacity(crops.len());
        let mut b = Vec::with_capacity(crops.len());
        for (crop, &seed) in crops.iter().zip(seeds) {
            let (v1, v2) = make_view_pair(crop, seed, &self.config.augment);
            a.push(patchify(&v1)?);
            b.push(patchify(&v2)?);
        }
        Ok((a, b))
    }

    /// One optimizer step on already patchified view pairs.
    pub fn step_on_grids(&mut self, view1: &[PatchGrid], view2: &[PatchGrid], epoch: usize) -> Result<StepReport> {
        if view1.len() != view2.len() || view1.len() < 2 {
            return Err(Error::ShapeViolation(alloc::format!(
                "need two equal view batches of at least 2 images, got {} and {}",
                view1.len(),
                view2.len()
            )));
        }
        let step = self.step;
        let lr = lr_at(step, &self.config.schedule);
        self.encoder.zero_grad();
        let (_, p1, cache1) = self.encoder.forward_train(view1)?;
        let (_, p2, cache2) = self.encoder.forward_train(view2)?;
        let mode = match self.config.objective {
            Objective::Swis { normalization } => normalization,
            Objective::NtXent { .. } => Normalization::PerDimension,
        };
        let n1 = normalize_center_guarded(&p1.values, mode)?;
        let n2 = normalize_center_guarded(&p2.values, mode)?;
        let (d1, d2, total, loss, cov) = match self.config.objective {
            Objective::Swis { .. } => {
                let (loss, dz1, dz2, cov) = swis_loss_grad(&n1.z, &n2.z)?;
                let d1 = normalize_center_backward(&n1, &dz1)?;
                let d2 = normalize_center_backward(&n2, &dz2)?;
                (d1, d2, loss.total, loss, cov)
            }
            Objective::NtXent { temperature } => {
                let (value, g) = nt_xent_loss_grad(&interleave(&p1.values, &p2.values)?, temperature)?;
                let (d1, d2) = deinterleave(&g);
                let loss = crate::objective::swis_loss(&n1.z, &n2.z)?;
                (d1, d2, value, loss, pseudo_cross_cov(&n1.z, &n2.z)?)
            }
        };
        if !total.is_finite() {
            return Err(Error::Divergence { step });
        }
        self.encoder.backward(cache1, &d1)?;
        self.encoder.backward(cache2, &d2)?;
        self.optimizer.step(&mut self.encoder, lr, step)?;
        self.step += 1;
        Ok(StepReport {
            step,
            epoch,
            lr,
            total,
            on_diag: loss.on_diag,
            off_diag: loss.off_diag,
            mean_abs_offdiag: cov.mean_abs_offdiag(),
            mean_diag: cov.mean_diag(),
            degenerate: n1.degenerate + n2.degenerate,
        })
    }

    /// Train one epoch over `crops`, calling `on_step` after every step.
    pub fn run_epoch(
        &mut self,
        crops: &[GrayImage],
        epoch: usize,
        on_step: &mut dyn FnMut(&StepReport),
    ) -> Result<Vec<StepReport>> {
        let mut reports = Vec::new();
        for batch in batch_order(crops.len(), self.config.batch_size, self.config.data_seed, epoch) {
            let imgs: Vec<&GrayImage> = batch.iter().map(|&i| &crops[i]).collect();
            let seeds: Vec<u64> = batch
                .iter()
                .map(|&i| view_seed(self.config.augment_seed, epoch, i))
                .collect();
            let (a, b) = self.view_grids(&imgs, &seeds)?;
            let r = self.step_on_grids(&a, &b, epoch)?;
            on_step(&r);
            reports.push(r);
        }
        Ok(reports)
    }
}

/// Mean of a per-step diagnostic over an epoch.
pub fn epoch_mean(reports: &[StepReport], f: impl Fn(&StepReport) -> f64) -> f64 {
    if reports.is_empty() {
        return f64::NAN;
    }
    reports.iter().map(f).sum::<f64>() / reports.len() as f64
}

/// Convenience for tests and tools: the normalized projection batch of one
/// view set, in evaluation mode.
pub fn eval_projection(encoder: &mut PatchEncoder, grids: &[PatchGrid]) -> Result<Matrix> {
    let projected = encoder.embed(grids, crate::encoder::Stage::Projected)?;
    Ok(normalize_center_guarded(&projected.values, Normalization::PerDimension)?.z)
}
