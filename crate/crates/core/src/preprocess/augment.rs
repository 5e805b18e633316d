use alloc::format;
use alloc::vec::Vec;

use crate::image::FloatImage;
use crate::rng::{derive_seed, Lcg64};
use crate::{Error, GrayImage, Result};

pub const VIEW_SIZE: usize = 224;

/// Paper-white fill for pixels uncovered by the affine warp.
const BACKGROUND: f32 = 255.0;

/// A network input: `VIEW_SIZE²` intensities mapped into `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    augmentation_seed: Option<u64>,
}

impl View {
    /// Wrap raw values; every value must already lie in `[-1, 1]`.
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f32>,
        augmentation_seed: Option<u64>,
    ) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::ShapeViolation(format!(
                "{} values for a {width}x{height} view",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("view value {v} outside [-1, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
            augmentation_seed,
        })
    }

    fn from_intensity(img: &FloatImage, augmentation_seed: Option<u64>) -> Self {
        let pixels = img
            .data
            .iter()
            .map(|&x| (x / 127.5 - 1.0).clamp(-1.0, 1.0))
            .collect();
        Self {
            width: img.width,
            height: img.height,
            pixels,
            augmentation_seed,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn augmentation_seed(&self) -> Option<u64> {
        self.augmentation_seed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub rotation_deg: f64,
    pub translate_frac: f64,
    pub shear_deg: f64,
    pub crop_scale: (f64, f64),
    pub crop_ratio: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            brightness: (0.6, 1.4),
            contrast: (0.6, 1.4),
            rotation_deg: 10.0,
            translate_frac: 0.1,
            shear_deg: 10.0,
            crop_scale: (0.8, 1.0),
            crop_ratio: (3.0 / 4.0, 4.0 / 3.0),
        }
    }
}

/// Region of the 224×224 canvas that is resized back to full size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl CropRect {
    pub fn full() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            w: VIEW_SIZE as f64,
            h: VIEW_SIZE as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub brightness: f64,
    pub contrast: f64,
    pub rotation_rad: f64,
    pub shear_rad: f64,
    /// Translation as a fraction of the side length.
    pub translate: (f64, f64),
    pub crop: CropRect,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            brightness: 1.0,
            contrast: 1.0,
            rotation_rad: 0.0,
            shear_rad: 0.0,
            translate: (0.0, 0.0),
            crop: CropRect::full(),
        }
    }

    pub fn draw(cfg: &AugmentConfig, rng: &mut Lcg64) -> Self {
        let brightness = rng.uniform(cfg.brightness.0, cfg.brightness.1);
        let contrast = rng.uniform(cfg.contrast.0, cfg.contrast.1);
        let rot = cfg.rotation_deg.to_radians();
        let rotation_rad = rng.uniform(-rot, rot);
        let shear = cfg.shear_deg.to_radians();
        let shear_rad = rng.uniform(-shear, shear);
        let tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac);
        let ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac);
        let crop = draw_crop(cfg, rng);
        Self {
            brightness,
            contrast,
            rotation_rad,
            shear_rad,
            translate: (tx, ty),
            crop,
        }
    }

    fn affine_is_identity(&self) -> bool {
        self.rotation_rad == 0.0 && self.shear_rad == 0.0 && self.translate == (0.0, 0.0)
    }
}

fn draw_crop(cfg: &AugmentConfig, rng: &mut Lcg64) -> CropRect {
    let side = VIEW_SIZE as f64;
    let area = side * side;
    let (log_lo, log_hi) = (libm::log(cfg.crop_ratio.0), libm::log(cfg.crop_ratio.1));
    for _ in 0..10 {
        let target = area * rng.uniform(cfg.crop_scale.0, cfg.crop_scale.1);
        let ratio = libm::exp(rng.uniform(log_lo, log_hi));
        let w = libm::sqrt(target * ratio);
        let h = libm::sqrt(target / ratio);
        if w <= side && h <= side {
            let x = rng.uniform(0.0, side - w);
            let y = rng.uniform(0.0, side - h);
            return CropRect { x, y, w, h };
        }
    }
    CropRect::full()
}

fn jitter(img: &mut FloatImage, brightness: f64, contrast: f64) {
    if brightness != 1.0 {
        let b = brightness as f32;
        for v in &mut img.data {
            *v = (*v * b).clamp(0.0, 255.0);
        }
    }
    if contrast != 1.0 {
        let mean = img.data.iter().map(|&v| v as f64).sum::<f64>() / img.data.len() as f64;
        let (c, m) = (contrast as f32, mean as f32);
        for v in &mut img.data {
            *v = ((*v - m) * c + m).clamp(0.0, 255.0);
        }
    }
}

/// Rotation-plus-shear about the image centre, then translation.
fn affine(img: &FloatImage, p: &AugmentParams) -> FloatImage {
    let (w, h) = (img.width as f64, img.height as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (s, c) = (libm::sin(p.rotation_rad), libm::cos(p.rotation_rad));
    let k = libm::tan(p.shear_rad);
    // forward map A = R · [[1, k], [0, 1]]
    let a = [[c, c * k - s], [s, s * k + c]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let (tx, ty) = (p.translate.0 * w, p.translate.1 * h);
    let mut data = Vec::with_capacity(img.data.len());
    for oy in 0..img.height {
        for ox in 0..img.width {
            let dx = ox as f64 + 0.5 - cx - tx;
            let dy = oy as f64 + 0.5 - cy - ty;
            let sx = inv[0][0] * dx + inv[0][1] * dy + cx - 0.5;
            let sy = inv[1][0] * dx + inv[1][1] * dy + cy - 0.5;
            data.push(img.sample(sx, sy, BACKGROUND));
        }
    }
    FloatImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Apply explicit augmentation parameters to a cropped signature.
pub fn apply_params(crop: &GrayImage, p: &AugmentParams, seed: Option<u64>) -> View {
    let mut img = crop.to_float().resize(VIEW_SIZE, VIEW_SIZE);
    jitter(&mut img, p.brightness, p.contrast);
    if !p.affine_is_identity() {
        img = affine(&img, p);
    }
    let c = p.crop;
    let img = img.resize_region(c.x, c.y, c.w, c.h, VIEW_SIZE, VIEW_SIZE);
    View::from_intensity(&img, seed)
}

/// Seeded augmentation of a cropped signature into a training view.
pub fn augment(crop: &GrayImage, seed: u64, cfg: &AugmentConfig) -> View {
    let mut rng = Lcg64::new(seed);
    let params = AugmentParams::draw(cfg, &mut rng);
    apply_params(crop, &params, Some(seed))
}

/// Two independent augmentations of the same parent image (a positive pair).
pub fn make_view_pair(crop: &GrayImage, seed: u64, cfg: &AugmentConfig) -> (View, View) {
    (
        augment(crop, derive_seed(seed, 1), cfg),
        augment(crop, derive_seed(seed, 2), cfg),
    )
}

/// Deterministic evaluation view: resize only.
pub fn eval_view(crop: &GrayImage) -> View {
    apply_params(crop, &AugmentParams::identity(), None)
}
