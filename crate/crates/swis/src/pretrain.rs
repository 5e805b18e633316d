//! Pretraining driver: data loading, the epoch loop, run directory,
//! diagnostics log and checkpoints.
//!
//! A run named `<name>` writes into `<run.dir>/<name>/`:
//!
//! * `config.resolved`, the fully resolved configuration
//! * `run_info.json`, seeds, version stamp and data summary
//! * `train_log.csv`, one row per optimizer step
//! * `ckpt_<epoch>`, checkpoints every `run.checkpoint_every` epochs and at the end

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use swis_core::encoder::PatchEncoder;
use swis_core::preprocess::crop_signature;
use swis_core::train::{batch_order, epoch_mean, StepReport, Trainer};
use swis_core::verify::Label;
use swis_core::GrayImage;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{load_grayscale, Manifest, SignatureSample, Split};
use crate::error::{Error, IoContext, Result};

pub const LOG_HEADER: &str = "step,on_diag,off_diag,total,mean_abs_offdiag,mean_diag";

/// Mean diagnostics over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub total: f64,
    pub on_diag: f64,
    pub off_diag: f64,
    pub mean_abs_offdiag: f64,
    pub mean_diag: f64,
    pub degenerate: usize,
}

impl EpochSummary {
    pub fn from_reports(epoch: usize, r: &[StepReport]) -> Self {
        Self {
            epoch,
            total: epoch_mean(r, |s| s.total),
            on_diag: epoch_mean(r, |s| s.on_diag),
            off_diag: epoch_mean(r, |s| s.off_diag),
            mean_abs_offdiag: epoch_mean(r, |s| s.mean_abs_offdiag),
            mean_diag: epoch_mean(r, |s| s.mean_diag),
            degenerate: r.iter().map(|s| s.degenerate).sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub run_dir: PathBuf,
    pub epochs: Vec<EpochSummary>,
    /// Report of the very first step, taken before any update.
    pub first_step: StepReport,
    pub checkpoints: Vec<PathBuf>,
    pub encoder: PatchEncoder,
}

#[derive(Serialize)]
struct Seeds {
    split: u64,
    data: u64,
    augment: u64,
    init: u64,
    eval: u64,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    version: &'a str,
    model: String,
    config_hash: String,
    deterministic: bool,
    manifest: String,
    images: usize,
    steps_per_epoch: usize,
    epochs: usize,
    seeds: Seeds,
}

/// Otsu threshold, tight crop; failures name the file.
pub fn load_crop(manifest: &Manifest, sample: &SignatureSample) -> Result<GrayImage> {
    let path = manifest.resolve(sample);
    let img = load_grayscale(&path)?;
    crop_signature(&img).map_err(|source| Error::Preprocess { path, source })
}

pub fn pretrain_samples<'a>(manifest: &'a Manifest, use_forged: bool) -> Vec<&'a SignatureSample> {
    manifest
        .with_split(Split::Pretrain)
        .filter(|s| use_forged || s.label == Label::Genuine)
        .collect()
}

fn steps_per_epoch(n: usize, batch: usize) -> usize {
    n / batch + usize::from(n % batch >= 2)
}

pub fn run_pretrain(cfg: &RunConfig, deterministic: bool) -> Result<PretrainOutcome> {
    let manifest = Manifest::read_csv(&cfg.manifest)?;
    let samples = pretrain_samples(&manifest, cfg.pretrain_use_forged);
    if samples.len() < 2 {
        return Err(Error::Manifest(format!(
            "{}: need at least 2 pretraining images, found {}",
            cfg.manifest.display(),
            samples.len()
        )));
    }
    log::info!("loading {} pretraining images", samples.len());
    let crops = samples
        .iter()
        .map(|s| load_crop(&manifest, s))
        .collect::<Result<Vec<_>>>()?;
    let encoder = PatchEncoder::new(cfg.encoder_config(), cfg.seed_init)?;
    pretrain_on_crops(cfg, &crops, encoder, deterministic)
}

/// The epoch loop on already cropped images.
pub fn pretrain_on_crops(
    cfg: &RunConfig,
    crops: &[GrayImage],
    encoder: PatchEncoder,
    deterministic: bool,
) -> Result<PretrainOutcome> {
    let spe = steps_per_epoch(crops.len(), cfg.batch_size);
    debug_assert_eq!(spe, batch_order(crops.len(), cfg.batch_size, 0, 0).len());
    let epochs = cfg.epochs();
    let run_dir = cfg.run_dir.join(&cfg.run_name);
    fs::create_dir_all(&run_dir).context(|| format!("creating {}", run_dir.display()))?;
    crate::write_atomic(&run_dir.join("config.resolved"), cfg.to_text().as_bytes())?;
    let info = RunInfo {
        version: env!("CARGO_PKG_VERSION"),
        model: encoder.config.canonical(),
        config_hash: format!("{:016x}", encoder.config.hash()),
        deterministic,
        manifest: cfg.manifest.display().to_string(),
        images: crops.len(),
        steps_per_epoch: spe,
        epochs,
        seeds: Seeds {
            split: cfg.seed_split,
            data: cfg.seed_data,
            augment: cfg.seed_augment,
            init: cfg.seed_init,
            eval: cfg.seed_eval,
        },
    };
    crate::write_atomic(&run_dir.join("run_info.json"), serde_json::to_string_pretty(&info)?.as_bytes())?;

    let log_path = run_dir.join("train_log.csv");
    let mut log_file = std::io::BufWriter::new(
        fs::File::create(&log_path).context(|| format!("creating {}", log_path.display()))?,
    );
    writeln!(log_file, "{LOG_HEADER}").context(|| format!("writing {}", log_path.display()))?;

    let mut trainer = Trainer::new(encoder, cfg.train_config(spe))?;
    let mut summaries = Vec::with_capacity(epochs);
    let mut first_step = None;
    let mut checkpoints = Vec::new();
    for epoch in 0..epochs {
        let mut io_err = None;
        let reports = trainer.run_epoch(crops, epoch, &mut |r| {
            if let Err(e) = writeln!(
                log_file,
                "{},{},{},{},{},{}",
                r.step, r.on_diag, r.off_diag, r.total, r.mean_abs_offdiag, r.mean_diag
            ) {
                io_err.get_or_insert(e);
            }
        });
        log_file.flush().context(|| format!("writing {}", log_path.display()))?;
        if let Some(e) = io_err {
            return Err(Error::Io {
                context: format!("writing {}", log_path.display()),
                source: e,
            });
        }
        let reports = match reports {
            Ok(r) => r,
            Err(e) => {
                log::error!("epoch {}: {e}; last checkpoint kept", epoch + 1);
                return Err(e.into());
            }
        };
        first_step.get_or_insert(reports[0]);
        let s = EpochSummary::from_reports(epoch + 1, &reports);
        if s.degenerate > 0 {
            log::warn!("epoch {}: {} degenerate embedding columns hit the norm guard", epoch + 1, s.degenerate);
        }
        log::info!(
            "epoch {}/{}: loss {:.4} (on {:.4}, off {:.4}) mean|C_ij| {:.5} mean C_ii {:.5}",
            epoch + 1,
            epochs,
            s.total,
            s.on_diag,
            s.off_diag,
            s.mean_abs_offdiag,
            s.mean_diag
        );
        summaries.push(s);
        let done = epoch + 1;
        if done == epochs || (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
            let path = checkpoint_path(&run_dir, done);
            Checkpoint::from_encoder(&trainer.encoder, done as u64).save(&path)?;
            checkpoints.push(path);
        }
    }
    Ok(PretrainOutcome {
        run_dir,
        epochs: summaries,
        first_step: first_step.expect("at least one epoch with one step"),
        checkpoints,
        encoder: trainer.encoder,
    })
}

pub fn checkpoint_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join(format!("ckpt_{epoch}"))
}
