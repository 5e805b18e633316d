//! Scatter plots as PNG.

use std::path::Path;

use swis_core::Matrix;

use crate::error::{Error, Result};

const SIZE: u32 = 640;
const MARGIN: f64 = 32.0;
const RADIUS: i64 = 4;

/// Twenty well-separated colours, reused cyclically.
const PALETTE: [[u8; 3]; 20] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [174, 199, 232],
    [255, 187, 120],
    [152, 223, 138],
    [255, 152, 150],
    [197, 176, 213],
    [196, 156, 148],
    [247, 182, 210],
    [199, 199, 199],
    [219, 219, 141],
    [158, 218, 229],
];

/// Render `points` (N×2) coloured by `labels` into PNG bytes.
pub fn scatter_png(points: &Matrix, labels: &[usize]) -> Result<Vec<u8>> {
    if points.cols() != 2 || points.rows() != labels.len() {
        return Err(Error::Core(swis_core::Error::ShapeViolation(format!(
            "scatter needs N x 2 points and N labels, got {:?} and {}",
            points.shape(),
            labels.len()
        ))));
    }
    let mut img = image::RgbImage::from_pixel(SIZE, SIZE, image::Rgb([255, 255, 255]));
    let frame = image::Rgb([200, 200, 200]);
    let (lo, hi) = (MARGIN as u32 / 2, SIZE - MARGIN as u32 / 2);
    for t in lo..=hi {
        for (x, y) in [(t, lo), (t, hi), (lo, t), (hi, t)] {
            img.put_pixel(x, y, frame);
        }
    }
    let range = |c: usize| {
        let col = points.column(c);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, (max - min).max(1e-12))
    };
    let ((x0, xs), (y0, ys)) = (range(0), range(1));
    let span = SIZE as f64 - 2.0 * MARGIN;
    for (i, &label) in labels.iter().enumerate() {
        let cx = (MARGIN + (points[(i, 0)] - x0) / xs * span).round() as i64;
        let cy = (SIZE as f64 - MARGIN - (points[(i, 1)] - y0) / ys * span).round() as i64;
        let colour = image::Rgb(PALETTE[label % PALETTE.len()]);
        for dy in -RADIUS..=RADIUS {
            for dx in -RADIUS..=RADIUS {
                if dx * dx + dy * dy <= RADIUS * RADIUS {
                    let (x, y) = (cx + dx, cy + dy);
                    if (0..SIZE as i64).contains(&x) && (0..SIZE as i64).contains(&y) {
                        img.put_pixel(x as u32, y as u32, colour);
                    }
                }
            }
        }
    }
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::CorruptImage {
            path: "<scatter>".into(),
            reason: e.to_string(),
        })?;
    Ok(bytes)
}

pub fn write_scatter(path: &Path, points: &Matrix, labels: &[usize]) -> Result<()> {
    crate::write_atomic(path, &scatter_png(points, labels)?)
}
