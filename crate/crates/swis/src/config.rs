//! Run configuration: a flat `key = value` file with dotted section names.
//!
//! ```text
//! # comments start with '#'
//! model.backbone = tiny_cnn
//! optimizer.trust_coefficient = 0.001
//! ```
//!
//! Every key has a default; unknown keys and ill-typed values are errors.
//! [`RunConfig::to_text`] emits every key, and parsing that text yields the
//! same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use swis_core::encoder::{BackboneKind, EncoderConfig, Stage};
use swis_core::objective::Normalization;
use swis_core::optim::LarsConfig;
use swis_core::preprocess::AugmentConfig;
use swis_core::schedule::ScheduleConfig;
use swis_core::svm::{Gamma, SvmConfig};
use swis_core::train::{Objective, TrainConfig};
use swis_core::tsne::TsneConfig;

use crate::dataset::DatasetId;
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Swis,
    NtXent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run_name: String,
    pub run_dir: PathBuf,
    pub checkpoint_every: usize,

    pub manifest: PathBuf,
    pub dataset_id: DatasetId,
    pub pretrain_use_forged: bool,
    pub n_ref: usize,

    pub augment: AugmentConfig,

    pub backbone: BackboneKind,
    pub in_channels: usize,
    pub projector_hidden: usize,
    pub bn_momentum: f64,

    pub objective: ObjectiveKind,
    pub normalization: Normalization,
    pub temperature: f64,

    pub lr: f64,
    pub lars: LarsConfig,

    pub batch_size: usize,
    pub warmup_epochs: f64,
    pub horizon_epochs: f64,
    /// `None` means the corpus default (500 ICDAR, 200 BHSig260).
    pub train_epochs: Option<usize>,

    pub svm_c: f64,
    pub svm_gamma: Gamma,
    pub eval_stage: Stage,
    pub tsne_perplexity: f64,
    pub tsne_iterations: usize,

    pub seed_split: u64,
    pub seed_data: u64,
    pub seed_augment: u64,
    pub seed_init: u64,
    pub seed_eval: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lars = LarsConfig::default();
        let sched = ScheduleConfig::default();
        let svm = SvmConfig::default();
        let tsne = TsneConfig::default();
        Self {
            run_name: "default".into(),
            run_dir: "runs".into(),
            checkpoint_every: 50,
            manifest: "manifest.csv".into(),
            dataset_id: DatasetId::Custom,
            pretrain_use_forged: true,
            n_ref: 8,
            augment: AugmentConfig::default(),
            backbone: BackboneKind::ResNet18,
            in_channels: 1,
            projector_hidden: 512,
            bn_momentum: 0.1,
            objective: ObjectiveKind::Swis,
            normalization: Normalization::PerDimension,
            temperature: 0.5,
            lr: sched.base_lr,
            lars,
            batch_size: 32,
            warmup_epochs: sched.warmup_epochs,
            horizon_epochs: sched.horizon_epochs,
            train_epochs: None,
            svm_c: svm.c,
            svm_gamma: svm.gamma,
            eval_stage: Stage::Pooled,
            tsne_perplexity: tsne.perplexity,
            tsne_iterations: tsne.iterations,
            seed_split: 7,
            seed_data: 0,
            seed_augment: 1,
            seed_init: 2,
            seed_eval: 3,
        }
    }
}

fn type_error(key: &str, expected: &str, value: &str) -> Error {
    Error::Config(format!("key `{key}`: expected {expected}, got `{value}`"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse().map_err(|_| type_error(key, expected, value))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value, "a number")?;
    if !v.is_finite() {
        return Err(type_error(key, "a finite number", value));
    }
    Ok(v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(type_error(key, "true or false", value)),
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

/// Shortest text that parses back to the same value.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn normalization_name(n: Normalization) -> &'static str {
    match n {
        Normalization::PerDimension => "per_dimension",
        Normalization::PerVector => "per_vector",
    }
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Pooled => "pooled",
        Stage::Projected => "projected",
        Stage::NormalizedCentered => "normalized_centered",
    }
}

impl RunConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let v = unquote(raw.trim());
        let a = &mut self.augment;
        match key {
            "run.name" => {
                if v.is_empty() || v.contains(['/', '\\']) {
                    return Err(type_error(key, "a non-empty name without path separators", v));
                }
                self.run_name = v.into()
            }
            "run.dir" => self.run_dir = v.into(),
            "run.checkpoint_every" => self.checkpoint_every = parse_num(key, v, "a non-negative integer")?,
            "dataset.manifest" => self.manifest = v.into(),
            "dataset.id" => self.dataset_id = v.parse().map_err(Error::Config)?,
            "dataset.pretrain_use_forged" => self.pretrain_use_forged = parse_bool(key, v)?,
            "dataset.n_ref" => self.n_ref = parse_num(key, v, "a non-negative integer")?,
            "preprocess.brightness_min" => a.brightness.0 = parse_f64(key, v)?,
            "preprocess.brightness_max" => a.brightness.1 = parse_f64(key, v)?,
            "preprocess.contrast_min" => a.contrast.0 = parse_f64(key, v)?,
            "preprocess.contrast_max" => a.contrast.1 = parse_f64(key, v)?,
            "preprocess.rotation_deg" => a.rotation_deg = parse_f64(key, v)?,
            "preprocess.translate_frac" => a.translate_frac = parse_f64(key, v)?,
            "preprocess.shear_deg" => a.shear_deg = parse_f64(key, v)?,
            "preprocess.crop_scale_min" => a.crop_scale.0 = parse_f64(key, v)?,
            "preprocess.crop_scale_max" => a.crop_scale.1 = parse_f64(key, v)?,
            "preprocess.crop_ratio_min" => a.crop_ratio.0 = parse_f64(key, v)?,
            "preprocess.crop_ratio_max" => a.crop_ratio.1 = parse_f64(key, v)?,
            "model.backbone" => {
                self.backbone = v.parse().map_err(|_| type_error(key, "resnet18 or tiny_cnn", v))?
            }
            "model.in_channels" => self.in_channels = parse_num(key, v, "1 or 3")?,
            "model.projector_hidden" => self.projector_hidden = parse_num(key, v, "a positive integer")?,
            "model.bn_momentum" => self.bn_momentum = parse_f64(key, v)?,
            "objective.kind" => {
                self.objective = match v {
                    "swis" => ObjectiveKind::Swis,
                    "nt_xent" => ObjectiveKind::NtXent,
                    _ => return Err(type_error(key, "swis or nt_xent", v)),
                }
            }
            "objective.normalization" => {
                self.normalization = match v {
                    "per_dimension" => Normalization::PerDimension,
                    "per_vector" => Normalization::PerVector,
                    _ => return Err(type_error(key, "per_dimension or per_vector", v)),
                }
            }
            "objective.temperature" => self.temperature = parse_f64(key, v)?,
            "optimizer.lr" => self.lr = parse_f64(key, v)?,
            "optimizer.momentum" => self.lars.momentum = parse_f64(key, v)?,
            "optimizer.weight_decay" => self.lars.weight_decay = parse_f64(key, v)?,
            "optimizer.trust_coefficient" => self.lars.trust_coefficient = parse_f64(key, v)?,
            "optimizer.eps" => self.lars.eps = parse_f64(key, v)?,
            "schedule.batch_size" => self.batch_size = parse_num(key, v, "a positive integer")?,
            "schedule.warmup_epochs" => self.warmup_epochs = parse_f64(key, v)?,
            "schedule.horizon_epochs" => self.horizon_epochs = parse_f64(key, v)?,
            "schedule.train_epochs" => {
                self.train_epochs = if v == "auto" {
                    None
                } else {
                    Some(parse_num(key, v, "a positive integer or auto")?)
                }
            }
            "eval.svm_c" => self.svm_c = parse_f64(key, v)?,
            "eval.svm_gamma" => {
                self.svm_gamma = if v == "scale" {
                    Gamma::Scale
                } else {
                    Gamma::Value(parse_f64(key, v).map_err(|_| type_error(key, "scale or a number", v))?)
                }
            }
            "eval.stage" => {
                self.eval_stage = match v {
                    "pooled" => Stage::Pooled,
                    "projected" => Stage::Projected,
                    _ => return Err(type_error(key, "pooled or projected", v)),
                }
            }
            "eval.tsne_perplexity" => self.tsne_perplexity = parse_f64(key, v)?,
            "eval.tsne_iterations" => self.tsne_iterations = parse_num(key, v, "a non-negative integer")?,
            "seeds.split" => self.seed_split = parse_num(key, v, "an unsigned integer")?,
            "seeds.data" => self.seed_data = parse_num(key, v, "an unsigned integer")?,
            "seeds.augment" => self.seed_augment = parse_num(key, v, "an unsigned integer")?,
            "seeds.init" => self.seed_init = parse_num(key, v, "an unsigned integer")?,
            "seeds.eval" => self.seed_eval = parse_num(key, v, "an unsigned integer")?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its resolved textual value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let a = &self.augment;
        let f = fmt_f64;
        vec![
            ("run.name", self.run_name.clone()),
            ("run.dir", self.run_dir.display().to_string()),
            ("run.checkpoint_every", self.checkpoint_every.to_string()),
            ("dataset.manifest", self.manifest.display().to_string()),
            ("dataset.id", self.dataset_id.to_string()),
            ("dataset.pretrain_use_forged", self.pretrain_use_forged.to_string()),
            ("dataset.n_ref", self.n_ref.to_string()),
            ("preprocess.brightness_min", f(a.brightness.0)),
            ("preprocess.brightness_max", f(a.brightness.1)),
            ("preprocess.contrast_min", f(a.contrast.0)),
            ("preprocess.contrast_max", f(a.contrast.1)),
            ("preprocess.rotation_deg", f(a.rotation_deg)),
            ("preprocess.translate_frac", f(a.translate_frac)),
            ("preprocess.shear_deg", f(a.shear_deg)),
            ("preprocess.crop_scale_min", f(a.crop_scale.0)),
            ("preprocess.crop_scale_max", f(a.crop_scale.1)),
            ("preprocess.crop_ratio_min", f(a.crop_ratio.0)),
            ("preprocess.crop_ratio_max", f(a.crop_ratio.1)),
            ("model.backbone", self.backbone.name().into()),
            ("model.in_channels", self.in_channels.to_string()),
            ("model.projector_hidden", self.projector_hidden.to_string()),
            ("model.bn_momentum", f(self.bn_momentum)),
            (
                "objective.kind",
                match self.objective {
                    ObjectiveKind::Swis => "swis",
                    ObjectiveKind::NtXent => "nt_xent",
                }
                .into(),
            ),
            ("objective.normalization", normalization_name(self.normalization).into()),
            ("objective.temperature", f(self.temperature)),
            ("optimizer.lr", f(self.lr)),
            ("optimizer.momentum", f(self.lars.momentum)),
            ("optimizer.weight_decay", f(self.lars.weight_decay)),
            ("optimizer.trust_coefficient", f(self.lars.trust_coefficient)),
            ("optimizer.eps", f(self.lars.eps)),
            ("schedule.batch_size", self.batch_size.to_string()),
            ("schedule.warmup_epochs", f(self.warmup_epochs)),
            ("schedule.horizon_epochs", f(self.horizon_epochs)),
            ("schedule.train_epochs", self.epochs().to_string()),
            ("eval.svm_c", f(self.svm_c)),
            (
                "eval.svm_gamma",
                match self.svm_gamma {
                    Gamma::Scale => "scale".into(),
                    Gamma::Value(g) => f(g),
                },
            ),
            ("eval.stage", stage_name(self.eval_stage).into()),
            ("eval.tsne_perplexity", f(self.tsne_perplexity)),
            ("eval.tsne_iterations", self.tsne_iterations.to_string()),
            ("seeds.split", self.seed_split.to_string()),
            ("seeds.data", self.seed_data.to_string()),
            ("seeds.augment", self.seed_augment.to_string()),
            ("seeds.init", self.seed_init.to_string()),
            ("seeds.eval", self.seed_eval.to_string()),
        ]
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split_once('#').map_or(line, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).context(|| format!("reading config {}", path.display()))?;
        RunConfig::parse_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Resolved configuration as config text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let v = if v.contains('#') || v.starts_with(' ') || v.ends_with(' ') || v.is_empty() {
                format!("\"{v}\"")
            } else {
                v
            };
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size < 2 {
            return bad("schedule.batch_size must be at least 2");
        }
        if !(self.warmup_epochs >= 0.0 && self.warmup_epochs < self.horizon_epochs) {
            return bad("schedule.warmup_epochs must be >= 0 and below schedule.horizon_epochs");
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return bad("model.in_channels must be 1 or 3");
        }
        if self.train_epochs == Some(0) {
            return bad("schedule.train_epochs must be positive");
        }
        if self.temperature <= 0.0 {
            return bad("objective.temperature must be > 0");
        }
        if self.svm_c <= 0.0 {
            return bad("eval.svm_c must be > 0");
        }
        let a = &self.augment;
        if a.crop_scale.0 > a.crop_scale.1 || a.crop_ratio.0 > a.crop_ratio.1 || a.crop_scale.0 <= 0.0 {
            return bad("preprocess crop ranges must be positive with min <= max");
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.train_epochs.unwrap_or_else(|| self.dataset_id.default_epochs())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            backbone: self.backbone,
            in_channels: self.in_channels,
            projector_hidden: self.projector_hidden,
            bn_momentum: self.bn_momentum as f32,
        }
    }

    pub fn train_config(&self, steps_per_epoch: usize) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            objective: match self.objective {
                ObjectiveKind::Swis => Objective::Swis {
                    normalization: self.normalization,
                },
                ObjectiveKind::NtXent => Objective::NtXent {
                    temperature: self.temperature,
                },
            },
            lars: self.lars,
            schedule: ScheduleConfig {
                base_lr: self.lr,
                warmup_epochs: self.warmup_epochs,
                horizon_epochs: self.horizon_epochs,
                train_epochs: self.epochs(),
                steps_per_epoch,
            },
            augment: self.augment.clone(),
            data_seed: self.seed_data,
            augment_seed: self.seed_augment,
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.svm_c,
            gamma: self.svm_gamma,
            ..SvmConfig::default()
        }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            perplexity: self.tsne_perplexity,
            iterations: self.tsne_iterations,
            ..TsneConfig::default()
        }
    }
}
