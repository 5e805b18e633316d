//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use swis_core::preprocess::{make_view_pair, View};
use swis_core::rng::derive_seed;
use swis_core::synth::{render_signature, SynthStyle};
use swis_core::tsne::TsneConfig;
use swis_core::verify::Label;
use swis_core::GrayImage;

use crate::config::RunConfig;
use crate::dataset::{assign_references, build_manifest, save_grayscale, DatasetId, Manifest, Role, SignatureSample, Split};
use crate::evaluate::{clamped_tsne, run_evaluate, tsne_plot, FeatureSource, FeatureTable};
use crate::pretrain::{load_crop, run_pretrain};
use crate::{deterministic_mode, Error, IoContext, Result};

#[derive(Debug, Parser)]
#[command(name = "swis", version, about = "Self-supervised offline signature representations and writer-dependent verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a corpus directory and write a manifest CSV.
    Ingest(IngestArgs),
    /// Crop every manifest image; optionally dump augmented view pairs.
    Preprocess(PreprocessArgs),
    /// Self-supervised pretraining of the patch encoder.
    Pretrain(PretrainArgs),
    /// Fit writer SVMs on reference features and verify queries.
    Evaluate(EvaluateArgs),
    /// t-SNE scatter of a feature file.
    Tsne(TsneArgs),
    /// Run the built-in numerical checks.
    Selfcheck,
    /// Render a small synthetic signature corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// icdar2011_dutch, icdar2011_chinese, bhsig260_bengali, bhsig260_hindi or custom
    #[arg(long)]
    pub dataset: DatasetId,
    /// Seed of the writer split.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Genuine references per test writer; 0 leaves roles unassigned.
    #[arg(long, default_value_t = 8)]
    pub n_ref: usize,
    /// Seed of the reference draw.
    #[arg(long, default_value_t = 3)]
    pub ref_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Augmented view pairs to write per image.
    #[arg(long, default_value_t = 0)]
    pub pairs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `key=value` override applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, conflicts_with = "features", required_unless_present = "features")]
    pub checkpoint: Option<PathBuf>,
    /// Feature CSV (`image_path,writer_id,f0,...`) instead of a checkpoint.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TsneArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub writers: usize,
    /// Genuine signatures per writer.
    #[arg(long, default_value_t = 12)]
    pub genuine: usize,
    /// Forgeries per writer.
    #[arg(long, default_value_t = 6)]
    pub forged: usize,
    /// Writers placed in the test split; the rest pretrain.
    #[arg(long, default_value_t = 3)]
    pub test_writers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.check()?;
    Ok(cfg)
}

fn view_image(v: &View) -> Result<GrayImage> {
    let px = v.pixels().iter().map(|&p| ((p + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8).collect();
    Ok(GrayImage::new(v.width(), v.height(), px)?)
}

fn stem(sample: &SignatureSample) -> String {
    sample.id().replace(['/', '\\'], "__")
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let mut m = build_manifest(&a.root, a.dataset, a.seed)?;
    if a.n_ref > 0 {
        m = assign_references(m, a.n_ref, a.ref_seed)?;
    }
    m.validate()?;
    m.write_csv(&a.out)?;
    println!(
        "{}: {} images, {} pretrain writers, {} test writers",
        a.out.display(),
        m.samples.len(),
        m.writers(Split::Pretrain).len(),
        m.writers(Split::Test).len()
    );
    Ok(())
}

fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let m = Manifest::read_csv(&a.manifest)?;
    fs::create_dir_all(&a.out).context(|| format!("creating {}", a.out.display()))?;
    let cfg = swis_core::preprocess::AugmentConfig::default();
    for (i, s) in m.samples.iter().enumerate() {
        let crop = load_crop(&m, s)?;
        let name = stem(s);
        save_grayscale(&a.out.join(format!("{name}.png")), &crop)?;
        for k in 0..a.pairs {
            let seed = derive_seed(derive_seed(a.seed, i as u64), k as u64);
            let (v1, v2) = make_view_pair(&crop, seed, &cfg);
            save_grayscale(&a.out.join(format!("{name}.pair{k}.a.png")), &view_image(&v1)?)?;
            save_grayscale(&a.out.join(format!("{name}.pair{k}.b.png")), &view_image(&v2)?)?;
        }
    }
    println!("cropped {} images into {}", m.samples.len(), a.out.display());
    Ok(())
}

fn pretrain(a: &PretrainArgs) -> Result<()> {
    let cfg = load_config(Some(&a.config), &a.overrides)?;
    let out = run_pretrain(&cfg, deterministic_mode())?;
    if let (Some(first), Some(last)) = (out.epochs.first(), out.epochs.last()) {
        println!(
            "epochs {}: loss {:.4} -> {:.4}, mean |C_ij| {:.5} -> {:.5}, mean C_ii {:.5} -> {:.5}",
            out.epochs.len(),
            first.total,
            last.total,
            first.mean_abs_offdiag,
            last.mean_abs_offdiag,
            first.mean_diag,
            last.mean_diag
        );
    }
    if let Some(ck) = out.checkpoints.last() {
        println!("final checkpoint {}", ck.display());
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref(), &a.overrides)?;
    let source = match (&a.checkpoint, &a.features) {
        (Some(c), _) => FeatureSource::Checkpoint(c.clone()),
        (None, Some(f)) => FeatureSource::Features(f.clone()),
        (None, None) => return Err(Error::Config("one of --checkpoint or --features is required".into())),
    };
    let out = run_evaluate(&source, &a.manifest, &a.out, &cfg)?;
    let m = out.metrics;
    let rate = |v: f64| if v.is_finite() { format!("{:.2}%", 100.0 * v) } else { "undefined".into() };
    println!(
        "accuracy {} FAR {} FRR {} ({} genuine, {} forged queries)",
        rate(m.accuracy),
        rate(m.far),
        rate(m.frr),
        m.n_genuine,
        m.n_forged
    );
    Ok(())
}

fn tsne_cmd(a: &TsneArgs) -> Result<()> {
    let table = FeatureTable::read_csv(&a.features)?;
    let cfg = TsneConfig {
        perplexity: a.perplexity,
        iterations: a.iterations,
        ..TsneConfig::default()
    };
    let cfg = clamped_tsne(&cfg, table.values.rows());
    tsne_plot(&table.values, &table.writers, &cfg, a.seed, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn selfcheck() -> Result<bool> {
    let results = crate::selfcheck::run_selfcheck();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

/// Render a corpus with a ready-made manifest (test references assigned).
pub fn synth(a: &SynthArgs) -> Result<Manifest> {
    if a.writers < 2 || a.test_writers == 0 || a.test_writers > a.writers {
        return Err(Error::Config(format!(
            "need at least 2 writers and 1..={} test writers",
            a.writers
        )));
    }
    let mut samples = Vec::new();
    for w in 0..a.writers {
        let writer = format!("w{w:03}");
        let style = SynthStyle::for_writer(derive_seed(a.seed, w as u64));
        let split = if w >= a.writers - a.test_writers { Split::Test } else { Split::Pretrain };
        for (label, count) in [(Label::Genuine, a.genuine), (Label::Forged, a.forged)] {
            let forged = label == Label::Forged;
            for k in 0..count {
                let rel = PathBuf::from(&writer).join(format!("{writer}-{}-{k:02}.png", if forged { "F" } else { "G" }));
                let img = render_signature(&style, k as u64, forged);
                save_grayscale(&a.out.join(&rel), &img)?;
                samples.push(SignatureSample {
                    image_path: rel,
                    writer_id: writer.clone(),
                    label,
                    split,
                    role: Role::Unassigned,
                });
            }
        }
    }
    let m = Manifest {
        dataset_id: DatasetId::Custom,
        root: a.out.clone(),
        samples,
        seed: a.seed,
    };
    let n_ref = (a.genuine / 2).clamp(1, 8);
    let m = assign_references(m, n_ref, a.seed)?;
    m.write_csv(&a.out.join("manifest.csv"))?;
    Ok(m)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Ingest(a) => ingest(a)?,
        Command::Preprocess(a) => preprocess(a)?,
        Command::Pretrain(a) => pretrain(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Tsne(a) => tsne_cmd(a)?,
        Command::Selfcheck => return selfcheck(),
        Command::Synth(a) => {
            let m = synth(a)?;
            println!("wrote {} images and {}", m.samples.len(), a.out.join("manifest.csv").display());
        }
    }
    Ok(true)
}

/// Parse arguments, run, and return the process exit code: 0 on success,
/// 1 on a runtime failure, 2 on a usage error.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
