//! Built-in numerical self-test. Every check compares a library routine
//! against a direct recomputation on small inputs.

use swis_core::objective::{normalize_center_backward, normalize_center_guarded, swis_loss, swis_loss_grad, Normalization};
use swis_core::optim::{lars_update, LarsConfig};
use swis_core::preprocess::{eval_view, otsu_threshold, patchify, N_PATCHES, PATCH_SIZE, PATCH_STRIDE, VIEW_SIZE};
use swis_core::schedule::{lr_at_epoch, ScheduleConfig};
use swis_core::synth::{render_signature, SynthStyle};
use swis_core::verify::{compute_metrics, Label, VerificationRecord};
use swis_core::{GrayImage, Lcg64, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, err: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: err.is_finite() && err <= tol,
        detail: format!("max error {err:.3e} (tolerance {tol:.0e})"),
    }
}

fn random(rows: usize, cols: usize, rng: &mut Lcg64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn naive_normalize(x: &Matrix) -> Matrix {
    let (n, d) = x.shape();
    let mut out = Matrix::zeros(n, d);
    for j in 0..d {
        let norm = (0..n).map(|i| x[(i, j)] * x[(i, j)]).sum::<f64>().sqrt().max(1e-12);
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
            let c: f64 = (0..n).map(|b| z[(b, i)] * z2[(b, j)]).sum();
            loss += if i == j { (c - 1.0).powi(2) } else { c * c };
        }
    }
    loss / n as f64
}

fn loss_check(rng: &mut Lcg64) -> CheckResult {
    let mut err: f64 = 0.0;
    for _ in 0..5 {
        let (a, b) = (random(7, 6, rng), random(7, 6, rng));
        let (za, zb) = (naive_normalize(&a), naive_normalize(&b));
        let got = swis_loss(&za, &zb).map(|l| l.total).unwrap_or(f64::NAN);
        err = err.max((got - naive_loss(&za, &zb)).abs());
    }
    check("loss vs triple loop", err, 1e-10)
}

fn normalization_check(rng: &mut Lcg64) -> CheckResult {
    let a = random(9, 5, rng);
    let err = match normalize_center_guarded(&a, Normalization::PerDimension) {
        Ok(n) => n.z.max_abs_diff(&naive_normalize(&a)),
        Err(_) => f64::NAN,
    };
    check("normalization vs direct formula", err, 1e-12)
}

fn gradient_check(rng: &mut Lcg64) -> CheckResult {
    let (a, b) = (random(6, 4, rng), random(6, 4, rng));
    let full = |a: &Matrix| naive_loss(&naive_normalize(a), &naive_normalize(&b));
    let analytic = (|| {
        let na = normalize_center_guarded(&a, Normalization::PerDimension)?;
        let nb = normalize_center_guarded(&b, Normalization::PerDimension)?;
        let (_, dz, _, _) = swis_loss_grad(&na.z, &nb.z)?;
        normalize_center_backward(&na, &dz)
    })();
    let Ok(g) = analytic else {
        return check("gradient vs finite differences", f64::NAN, 1e-5);
    };
    let h = 1e-6;
    let mut err: f64 = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let (mut p, mut m) = (a.clone(), a.clone());
            p[(i, j)] += h;
            m[(i, j)] -= h;
            let fd = (full(&p) - full(&m)) / (2.0 * h);
            err = err.max((fd - g[(i, j)]).abs() / fd.abs().max(1.0));
        }
    }
    check("gradient vs finite differences", err, 1e-5)
}

fn patch_check() -> CheckResult {
    let img = render_signature(&SynthStyle::for_writer(3), 0, false);
    let view = eval_view(&img);
    let err = match patchify(&view) {
        Ok(g) if g.len() == N_PATCHES => {
            let mut e: f64 = 0.0;
            for r in [0, 5, 12] {
                for c in [0, 7, 12] {
                    let p = g.patch(r, c);
                    for y in 0..PATCH_SIZE {
                        for x in 0..PATCH_SIZE {
                            let v = view.pixels()[(r * PATCH_STRIDE + y) * VIEW_SIZE + c * PATCH_STRIDE + x];
                            e = e.max((v - p[y * PATCH_SIZE + x]).abs() as f64);
                        }
                    }
                }
            }
            e
        }
        _ => f64::NAN,
    };
    check("patch extraction vs strided copy", err, 0.0)
}

fn otsu_check() -> CheckResult {
    let mut img = GrayImage::filled(20, 10, 210);
    for y in 2..8 {
        for x in 3..9 {
            img.set(x, y, 30);
        }
    }
    img.set(15, 5, 90);
    // exhaustive search for the smallest maximizer of between-class variance
    let px: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    let mut best = (0u8, f64::NEG_INFINITY);
    for t in 0..=255u8 {
        let lo: Vec<f64> = px.iter().copied().filter(|&v| v <= t as f64).collect();
        let hi: Vec<f64> = px.iter().copied().filter(|&v| v > t as f64).collect();
        if lo.is_empty() || hi.is_empty() {
            continue;
        }
        let (w0, w1) = (lo.len() as f64 / px.len() as f64, hi.len() as f64 / px.len() as f64);
        let (m0, m1) = (lo.iter().sum::<f64>() / lo.len() as f64, hi.iter().sum::<f64>() / hi.len() as f64);
        let s = w0 * w1 * (m0 - m1).powi(2);
        if s > best.1 * (1.0 + 1e-12) {
            best = (t, s);
        }
    }
    let got = otsu_threshold(&img).map(|t| t as f64).unwrap_or(f64::NAN);
    check("Otsu threshold vs exhaustive search", (got - best.0 as f64).abs(), 0.0)
}

fn schedule_check() -> CheckResult {
    let cfg = ScheduleConfig::default();
    let expected = [(0.0, 0.0), (5.0, 0.05), (10.0, 0.1), (505.0, 0.05), (1000.0, 0.0)];
    let err = expected
        .iter()
        .map(|&(e, lr)| (lr_at_epoch(e, &cfg) - lr).abs())
        .fold(0.0, f64::max);
    check("learning-rate schedule", err, 1e-12)
}

fn lars_check() -> CheckResult {
    let cfg = LarsConfig::default();
    let mut w = vec![3.0, 4.0];
    let g = vec![0.6, 0.8];
    let mut m = vec![0.0, 0.0];
    lars_update(&mut w, &g, &mut m, &cfg, 0.1, false);
    let lambda = 5.0 / (1.0 + cfg.weight_decay * 5.0 + cfg.eps);
    let step = |wi: f64, gi: f64| wi - 0.1 * cfg.trust_coefficient * lambda * (gi + cfg.weight_decay * wi);
    let err = (w[0] - step(3.0, 0.6)).abs().max((w[1] - step(4.0, 0.8)).abs());
    check("LARS update", err, 1e-15)
}

fn metrics_check(rng: &mut Lcg64) -> CheckResult {
    let writers = ["a", "b", "c"];
    let records: Vec<VerificationRecord> = (0..40)
        .map(|i| {
            let claimed = writers[rng.below(3) as usize];
            let predicted = writers[rng.below(3) as usize];
            let label = if rng.below(2) == 0 { Label::Genuine } else { Label::Forged };
            VerificationRecord::new(format!("q{i}"), claimed.into(), predicted.into(), label)
        })
        .collect();
    let err = match compute_metrics(&records) {
        Ok(m) => {
            let n = records.len() as f64;
            let correct = records.iter().filter(|r| (r.claimed_writer == r.predicted_writer) == (r.true_label == Label::Genuine)).count() as f64;
            let identity = 1.0 - (m.false_accepts + m.false_rejects) as f64 / n;
            (m.accuracy - correct / n).abs().max((m.accuracy - identity).abs())
        }
        Err(_) => f64::NAN,
    };
    check("accuracy = 1 - (FA + FR) / N", err, 1e-12)
}

pub fn run_selfcheck() -> Vec<CheckResult> {
    let mut rng = Lcg64::new(0x5e1f);
    vec![
        loss_check(&mut rng),
        normalization_check(&mut rng),
        gradient_check(&mut rng),
        patch_check(),
        otsu_check(),
        schedule_check(),
        lars_check(),
        metrics_check(&mut rng),
    ]
}
