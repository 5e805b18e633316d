use crate::{Error, GrayImage, Result};

use super::otsu_threshold;

/// Inclusive pixel bounds of the ink region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min as f64 && x <= self.x_max as f64 && y >= self.y_min as f64 && y <= self.y_max as f64
    }
}

/// Ink is the dark Otsu class, `v <= t`.
#[inline]
fn is_ink(v: u8, t: u8) -> bool {
    v <= t
}

pub fn ink_count(image: &GrayImage, t: u8) -> usize {
    image.pixels().iter().filter(|&&v| is_ink(v, t)).count()
}

/// Smallest axis-aligned rectangle holding every ink pixel, and the
/// grayscale sub-image it covers.
pub fn tight_crop(image: &GrayImage, t: u8) -> Result<(GrayImage, BoundingBox)> {
    let (w, h) = (image.width(), image.height());
    let mut bbox: Option<BoundingBox> = None;
    for y in 0..h {
        for x in 0..w {
            if !is_ink(image.get(x, y), t) {
                continue;
            }
            bbox = Some(match bbox {
                None => BoundingBox {
                    x_min: x,
                    y_min: y,
                    x_max: x,
                    y_max: y,
                },
                Some(b) => BoundingBox {
                    x_min: b.x_min.min(x),
                    y_min: b.y_min.min(y),
                    x_max: b.x_max.max(x),
                    y_max: b.y_max.max(y),
                },
            });
        }
    }
    let bbox = bbox.ok_or(Error::BlankSignature { threshold: t })?;
    let crop = image.sub_image(bbox.x_min, bbox.y_min, bbox.width(), bbox.height())?;
    Ok((crop, bbox))
}

/// Otsu threshold followed by the tight ink crop.
pub fn crop_signature(image: &GrayImage) -> Result<GrayImage> {
    let t = otsu_threshold(image)?;
    tight_crop(image, t).map(|(c, _)| c)
}
