//! Synthetic data: stroke-rendered signatures and clustered feature sets.
//!
//! A writer is a fixed set of smooth strokes; each genuine sample perturbs
//! them slightly, a forgery perturbs them heavily and adds tremor.

use alloc::vec::Vec;

use crate::rng::derive_seed;
use crate::{GrayImage, Lcg64, Matrix};

pub const SYNTH_WIDTH: usize = 256;
pub const SYNTH_HEIGHT: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStyle {
    /// Control points in the unit box, one polyline per stroke.
    pub strokes: Vec<Vec<(f64, f64)>>,
    pub slant: f64,
    pub pen_radius: f64,
    pub ink: u8,
}

impl SynthStyle {
    pub fn for_writer(writer: u64) -> Self {
        let mut rng = Lcg64::new(derive_seed(writer, 0x5157_0001));
        let n_strokes = 2 + rng.below(3) as usize;
        let mut strokes = Vec::with_capacity(n_strokes);
        let mut x0 = 0.05;
        let span = 0.9 / n_strokes as f64;
        for _ in 0..n_strokes {
            let n_pts = 4 + rng.below(5) as usize;
            let pts = (0..n_pts)
                .map(|k| {
                    let x = x0 + span * (k as f64 + rng.uniform(-0.4, 0.4)) / (n_pts - 1) as f64;
                    (x.clamp(0.0, 1.0), rng.uniform(0.15, 0.85))
                })
                .collect();
            strokes.push(pts);
            x0 += span;
        }
        Self {
            strokes,
            slant: rng.uniform(-0.3, 0.3),
            pen_radius: rng.uniform(1.2, 2.4),
            ink: rng.uniform(10.0, 70.0) as u8,
        }
    }
}

fn catmull_rom(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), p3: (f64, f64), t: f64) -> (f64, f64) {
    let (t2, t3) = (t * t, t * t * t);
    let f = |a: f64, b: f64, c: f64, d: f64| {
        0.5 * (2.0 * b + (-a + c) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (-a + 3.0 * b - 3.0 * c + d) * t3)
    };
    (f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1))
}

fn stamp(img: &mut GrayImage, cx: f64, cy: f64, r: f64, ink: u8) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x_lo = libm::floor(cx - r - 1.0) as i64;
    let y_lo = libm::floor(cy - r - 1.0) as i64;
    for y in y_lo.max(0)..(y_lo + libm::ceil(2.0 * r + 3.0) as i64).min(h) {
        for x in x_lo.max(0)..(x_lo + libm::ceil(2.0 * r + 3.0) as i64).min(w) {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let d = libm::sqrt(dx * dx + dy * dy);
            if d <= r {
                let v = img.get(x as usize, y as usize).min(ink);
                img.set(x as usize, y as usize, v);
            } else if d <= r + 1.0 {
                // one-pixel soft edge
                let a = r + 1.0 - d;
                let v = (255.0 - a * (255.0 - ink as f64)) as u8;
                let cur = img.get(x as usize, y as usize);
                img.set(x as usize, y as usize, cur.min(v));
            }
        }
    }
}

/// Render one signature of `style` on a white 256×128 canvas.
pub fn render_signature(style: &SynthStyle, sample: u64, forged: bool) -> GrayImage {
    let mut rng = Lcg64::new(derive_seed(sample, if forged { 0xF0 } else { 0x60 }));
    let (jitter, tremor) = if forged { (0.06, 0.8) } else { (0.012, 0.0) };
    let scale = rng.uniform(0.9, 1.05);
    let rot = rng.uniform(-0.05, 0.05);
    let (ox, oy) = (rng.uniform(-0.03, 0.03), rng.uniform(-0.05, 0.05));
    let slant = style.slant + if forged { rng.uniform(-0.2, 0.2) } else { 0.0 };
    let (cr, sr) = (libm::cos(rot), libm::sin(rot));
    let (w, h) = (SYNTH_WIDTH as f64, SYNTH_HEIGHT as f64);
    let to_px = |(x, y): (f64, f64)| {
        let (x, y) = (x - 0.5 + slant * (0.5 - y), y - 0.5);
        let (x, y) = (cr * x - sr * y, sr * x + cr * y);
        ((0.5 + ox + scale * x) * w, (0.5 + oy + scale * y * 0.9) * h)
    };
    let mut img = GrayImage::filled(SYNTH_WIDTH, SYNTH_HEIGHT, 255);
    for stroke in &style.strokes {
        let pts: Vec<(f64, f64)> = stroke
            .iter()
            .map(|&(x, y)| (x + jitter * rng.normal(), y + jitter * rng.normal()))
            .collect();
        let n = pts.len();
        for seg in 0..n - 1 {
            let p0 = pts[seg.saturating_sub(1)];
            let p3 = pts[(seg + 2).min(n - 1)];
            let (a, b) = (to_px(pts[seg]), to_px(pts[seg + 1]));
            let len = libm::hypot(b.0 - a.0, b.1 - a.1);
            let steps = (len * 2.0) as usize + 4;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let (px, py) = to_px(catmull_rom(p0, pts[seg], pts[seg + 1], p3, t));
                let (tx, ty) = (tremor * rng.normal(), tremor * rng.normal());
                stamp(&mut img, px + tx, py + ty, style.pen_radius, style.ink);
            }
        }
    }
    img
}

/// Feature-level synthetic corpus with one Gaussian cluster per writer.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub writers: usize,
    pub dim: usize,
    pub references: usize,
    pub genuine_queries: usize,
    pub forged_queries: usize,
    pub sigma: f64,
    /// Forgeries sit this many σ away from their writer's centre.
    pub forged_offset_sigmas: f64,
    pub center_spread: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            writers: 4,
            dim: 16,
            references: 8,
            genuine_queries: 6,
            forged_queries: 6,
            sigma: 0.01,
            forged_offset_sigmas: 10.0,
            center_spread: 1.0,
        }
    }
}

/// One synthetic feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFeature {
    pub writer: usize,
    pub forged: bool,
    pub reference: bool,
    pub values: Vec<f64>,
}

/// Writers get random centres; forgeries of writer `w` are drawn around a
/// point displaced toward writer `w + 1`'s centre so they land in another
/// writer's region.
pub fn clustered_features(spec: &ClusterSpec, seed: u64) -> Vec<SynthFeature> {
    let mut rng = Lcg64::new(seed);
    let centres: Matrix = Matrix::from_fn(spec.writers, spec.dim, |_, _| spec.center_spread * rng.normal());
    let mut out = Vec::new();
    let noisy = |c: &[f64], rng: &mut Lcg64| -> Vec<f64> { c.iter().map(|&v| v + spec.sigma * rng.normal()).collect() };
    for w in 0..spec.writers {
        let c = centres.row(w);
        for i in 0..spec.references + spec.genuine_queries {
            out.push(SynthFeature {
                writer: w,
                forged: false,
                reference: i < spec.references,
                values: noisy(c, &mut rng),
            });
        }
        let other = centres.row((w + 1) % spec.writers);
        let dist = libm::sqrt(c.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        let shift = (spec.forged_offset_sigmas * spec.sigma).max(dist);
        let forged_centre: Vec<f64> = c
            .iter()
            .zip(other)
            .map(|(a, b)| a + (b - a) / dist.max(1e-12) * shift)
            .collect();
        for _ in 0..spec.forged_queries {
            out.push(SynthFeature {
                writer: w,
                forged: true,
                reference: false,
                values: noisy(&forged_centre, &mut rng),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::crop_signature;

    #[test]
    fn renders_are_deterministic_and_croppable() {
        let style = SynthStyle::for_writer(3);
        let a = render_signature(&style, 11, false);
        assert_eq!(a, render_signature(&style, 11, false));
        assert_ne!(a, render_signature(&style, 12, false));
        let ink = a.pixels().iter().filter(|&&v| v < 128).count();
        assert!(ink > 200, "{ink}");
        let crop = crop_signature(&a).unwrap();
        assert!(crop.width() < SYNTH_WIDTH && crop.height() <= SYNTH_HEIGHT);
    }

    #[test]
    fn writers_differ() {
        assert_ne!(SynthStyle::for_writer(0), SynthStyle::for_writer(1));
    }

    #[test]
    fn forged_clusters_are_displaced() {
        let spec = ClusterSpec::default();
        let f = clustered_features(&spec, 1);
        assert_eq!(f.len(), spec.writers * (8 + 6 + 6));
        let g0 = f.iter().find(|s| s.writer == 0 && !s.forged).unwrap();
        let f0 = f.iter().find(|s| s.writer == 0 && s.forged).unwrap();
        let d: f64 = g0.values.iter().zip(&f0.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        assert!(d.sqrt() > 5.0 * spec.sigma);
    }
}
