//! Minimal single-channel image containers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// 8-bit grayscale image, row-major, dark ink on light paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::ShapeViolation(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Build from interleaved RGB triples using ITU-R BT.601 luma weights.
    pub fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::ShapeViolation(format!(
                "{} bytes for a {width}x{height} RGB image",
                rgb.len()
            )));
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Copy out the rectangle `[x0, x0+w) × [y0, y0+h)`.
    pub fn sub_image(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::ShapeViolation(format!(
                "sub-image {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            out.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        GrayImage::new(w, h, out)
    }

    pub fn to_float(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| p as f32).collect(),
        }
    }
}

/// BT.601 luma, rounded to nearest.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    libm::round(y).clamp(0.0, 255.0) as u8
}

/// Real-valued single-channel image on the 0..255 intensity scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample at continuous pixel-centre coordinates; points outside
    /// the image read `fill`.
    pub fn sample(&self, x: f64, y: f64, fill: f32) -> f32 {
        if x < -0.5 || y < -0.5 || x > self.width as f64 - 0.5 || y > self.height as f64 - 0.5 {
            return fill;
        }
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = libm::floor(xc) as usize;
        let y0 = libm::floor(yc) as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (xc - x0 as f64) as f32;
        let fy = (yc - y0 as f64) as f32;
        if fx == 0.0 && fy == 0.0 {
            return self.at(x0, y0);
        }
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize of the region `[x0, x0+w) × [y0, y0+h)` (continuous
    /// coordinates) onto an `out_w × out_h` grid, pixel-centre aligned.
    pub fn resize_region(
        &self,
        x0: f64,
        y0: f64,
        w: f64,
        h: f64,
        out_w: usize,
        out_h: usize,
    ) -> FloatImage {
        if x0 == 0.0
            && y0 == 0.0
            && w == self.width as f64
            && h == self.height as f64
            && out_w == self.width
            && out_h == self.height
        {
            return self.clone();
        }
        let sx = w / out_w as f64;
        let sy = h / out_h as f64;
        let mut data = Vec::with_capacity(out_w * out_h);
        for oy in 0..out_h {
            let y = y0 + (oy as f64 + 0.5) * sy - 0.5;
            for ox in 0..out_w {
                let x = x0 + (ox as f64 + 0.5) * sx - 0.5;
                let xc = x.clamp(0.0, (self.width - 1) as f64);
                let yc = y.clamp(0.0, (self.height - 1) as f64);
                data.push(self.sample(xc, yc, 0.0));
            }
        }
        FloatImage {
            width: out_w,
            height: out_h,
            data,
        }
    }

    pub fn resize(&self, out_w: usize, out_h: usize) -> FloatImage {
        self.resize_region(
            0.0,
            0.0,
            self.width as f64,
            self.height as f64,
            out_w,
            out_h,
        )
    }
}
