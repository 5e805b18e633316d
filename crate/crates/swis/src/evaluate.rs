//! Downstream evaluation: frozen features, per-corpus writer SVM, the
//! accept/reject rule and Accuracy / FAR / FRR.
//!
//! `evaluate` writes into its output directory:
//!
//! * `metrics.json`, rates, counts and the resolved configuration
//! * `records.csv`, one verification record per query
//! * `features.csv`, the features of every test sample
//! * `tsne.png`, a t-SNE scatter of the test features coloured by writer

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use swis_core::encoder::{PatchEncoder, Stage};
use swis_core::preprocess::{eval_view, patchify};
use swis_core::svm::{fit_writer_svm, l2_normalize_rows, SvmConfig};
use swis_core::tsne::{tsne, TsneConfig};
use swis_core::verify::{compute_metrics, verify, MetricsReport, VerificationRecord};
use swis_core::{GrayImage, Matrix};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{assign_references, Manifest, Role, SignatureSample, Split};
use crate::error::{Error, IoContext, Result};
use crate::pretrain::load_crop;

/// Images encoded per forward pass.
const CHUNK: usize = 16;

/// Evaluation-mode embeddings of cropped images, one row per image.
pub fn extract_features(encoder: &mut PatchEncoder, crops: &[GrayImage], stage: Stage) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(crops.len());
    for chunk in crops.chunks(CHUNK) {
        let grids = chunk
            .iter()
            .map(|c| patchify(&eval_view(c)))
            .collect::<swis_core::Result<Vec<_>>>()?;
        let e = encoder.embed(&grids, stage)?;
        for r in 0..e.values.rows() {
            rows.push(e.values.row(r).to_vec());
        }
    }
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, swis_core::encoder::EMBED_DIM));
    }
    Ok(Matrix::from_rows(&rows)?)
}

/// Features keyed by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub writers: Vec<String>,
    pub values: Matrix,
}

impl FeatureTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec!["image_path".to_string(), "writer_id".to_string()];
        header.extend((0..self.values.cols()).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for (r, (id, wr)) in self.ids.iter().zip(&self.writers).enumerate() {
            let mut rec = vec![id.clone(), wr.clone()];
            rec.extend(self.values.row(r).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
        crate::write_atomic(path, &bytes)
    }

    pub fn read_csv(path: &Path) -> Result<FeatureTable> {
        let text = fs::read(path).context(|| format!("reading features {}", path.display()))?;
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_slice());
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "image_path" || &header[1] != "writer_id" {
            return Err(Error::Manifest(format!(
                "{}: expected header image_path,writer_id,f0,...",
                path.display()
            )));
        }
        let (mut ids, mut writers, mut rows) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .skip(2)
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Manifest(format!("{} row {}: {e}", path.display(), line + 2)))?;
            ids.push(rec[0].to_owned());
            writers.push(rec[1].to_owned());
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(Error::Manifest(format!("{}: no feature rows", path.display())));
        }
        Ok(FeatureTable {
            ids,
            writers,
            values: Matrix::from_rows(&rows)?,
        })
    }

    /// Rows for `samples`, in their order.
    pub fn select(&self, samples: &[&SignatureSample]) -> Result<Matrix> {
        let index: BTreeMap<&str, usize> = self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut rows = Vec::with_capacity(samples.len());
        for s in samples {
            let id = s.id();
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| Error::Manifest(format!("no features for sample {id}")))?;
            rows.push(i);
        }
        Ok(self.values.select_rows(&rows))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub metrics: MetricsReport,
    pub records: Vec<VerificationRecord>,
    pub n_references: usize,
    pub n_writers: usize,
}

/// Fit the writer classifier on reference rows and verify every query
/// against the writer it claims (its manifest writer).
pub fn evaluate_features(samples: &[&SignatureSample], features: &Matrix, svm: &SvmConfig) -> Result<EvalOutcome> {
    if samples.len() != features.rows() {
        return Err(Error::Core(swis_core::Error::ShapeViolation(format!(
            "{} samples but {} feature rows",
            samples.len(),
            features.rows()
        ))));
    }
    let refs: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].role == Role::Reference).collect();
    let ref_ids: Vec<String> = refs.iter().map(|&i| samples[i].writer_id.clone()).collect();
    let clf = fit_writer_svm(&features.select_rows(&refs), &ref_ids, svm)?;
    let mut records = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if s.role == Role::Query {
            records.push(verify(&s.id(), features.row(i), &s.writer_id, s.label, &clf)?);
        }
    }
    let metrics = compute_metrics(&records)?;
    if !metrics.far_defined() {
        log::warn!("no forged queries: FAR is undefined");
    }
    if !metrics.frr_defined() {
        log::warn!("no genuine queries: FRR is undefined");
    }
    Ok(EvalOutcome {
        metrics,
        records,
        n_references: refs.len(),
        n_writers: clf.classes.len(),
    })
}

#[derive(Serialize)]
struct MetricsJson<'a> {
    accuracy: f64,
    far: Option<f64>,
    frr: Option<f64>,
    n_genuine: usize,
    n_forged: usize,
    false_accepts: usize,
    false_rejects: usize,
    n_queries: usize,
    n_references: usize,
    n_writers: usize,
    feature_source: &'a str,
    config: BTreeMap<&'static str, String>,
}

pub fn metrics_json(outcome: &EvalOutcome, source: &str, cfg: &RunConfig) -> Result<String> {
    let m = &outcome.metrics;
    let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
    let doc = MetricsJson {
        accuracy: m.accuracy,
        far: finite(m.far),
        frr: finite(m.frr),
        n_genuine: m.n_genuine,
        n_forged: m.n_forged,
        false_accepts: m.false_accepts,
        false_rejects: m.false_rejects,
        n_queries: outcome.records.len(),
        n_references: outcome.n_references,
        n_writers: outcome.n_writers,
        feature_source: source,
        config: cfg.entries().into_iter().collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn records_csv(records: &[VerificationRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["query_id", "claimed_writer", "predicted_writer", "true_label", "decision", "correct"])?;
    for r in records {
        w.write_record([
            r.query_id.as_str(),
            &r.claimed_writer,
            &r.predicted_writer,
            r.true_label.as_str(),
            r.decision.as_str(),
            if r.correct { "true" } else { "false" },
        ])?;
    }
    w.into_inner().map_err(|e| Error::Manifest(e.to_string()))
}

/// t-SNE scatter of `features` coloured by writer. Perplexity is lowered
/// when there are too few points for the configured value.
pub fn tsne_plot(features: &Matrix, writers: &[String], cfg: &TsneConfig, seed: u64, out: &Path) -> Result<()> {
    let mut classes: Vec<&String> = writers.iter().collect();
    classes.sort();
    classes.dedup();
    let labels: Vec<usize> = writers.iter().map(|w| classes.binary_search(&w).unwrap_or(0)).collect();
    let points = tsne(&l2_normalize_rows(features), cfg, seed)?;
    crate::plot::write_scatter(out, &points, &labels)
}

pub fn clamped_tsne(cfg: &TsneConfig, n: usize) -> TsneConfig {
    let limit = (n.saturating_sub(1)) as f64 / 3.0;
    if cfg.perplexity < limit || n < 2 {
        return *cfg;
    }
    log::warn!(
        "t-SNE perplexity {} is too large for {n} samples; using {limit:.3}",
        cfg.perplexity
    );
    TsneConfig {
        perplexity: limit.max(f64::MIN_POSITIVE),
        ..*cfg
    }
}

#[derive(Debug, Clone)]
pub enum FeatureSource {
    Checkpoint(PathBuf),
    Features(PathBuf),
}

/// Load the manifest (assigning references when it has none), obtain
/// features, evaluate and write every output file.
pub fn run_evaluate(source: &FeatureSource, manifest_path: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<EvalOutcome> {
    let mut manifest = Manifest::read_csv(manifest_path)?;
    let assigned = manifest.with_split(Split::Test).any(|s| s.role != Role::Unassigned);
    if !assigned {
        log::info!("assigning {} references per test writer (seed {})", cfg.n_ref, cfg.seed_eval);
        manifest = assign_references(manifest, cfg.n_ref, cfg.seed_eval)?;
    }
    let samples: Vec<&SignatureSample> = manifest.with_split(Split::Test).collect();
    if samples.is_empty() {
        return Err(Error::Manifest(format!("{}: no test samples", manifest_path.display())));
    }
    let (features, source_name) = match source {
        FeatureSource::Checkpoint(path) => {
            let ck = Checkpoint::load(path)?;
            ck.check_compatible(&cfg.encoder_config())?;
            let mut enc = ck.into_encoder()?;
            log::info!("extracting features for {} test images", samples.len());
            let crops = samples
                .iter()
                .map(|s| load_crop(&manifest, s))
                .collect::<Result<Vec<_>>>()?;
            (extract_features(&mut enc, &crops, cfg.eval_stage)?, "checkpoint")
        }
        FeatureSource::Features(path) => (FeatureTable::read_csv(path)?.select(&samples)?, "features"),
    };
    let outcome = evaluate_features(&samples, &features, &cfg.svm_config())?;
    fs::create_dir_all(out_dir).context(|| format!("creating {}", out_dir.display()))?;
    crate::write_atomic(&out_dir.join("metrics.json"), metrics_json(&outcome, source_name, cfg)?.as_bytes())?;
    crate::write_atomic(&out_dir.join("records.csv"), &records_csv(&outcome.records)?)?;
    let writers: Vec<String> = samples.iter().map(|s| s.writer_id.clone()).collect();
    FeatureTable {
        ids: samples.iter().map(|s| s.id()).collect(),
        writers: writers.clone(),
        values: features.clone(),
    }
    .write_csv(&out_dir.join("features.csv"))?;
    let tcfg = clamped_tsne(&cfg.tsne_config(), samples.len());
    tsne_plot(&features, &writers, &tcfg, cfg.seed_eval, &out_dir.join("tsne.png"))?;
    Ok(outcome)
}
