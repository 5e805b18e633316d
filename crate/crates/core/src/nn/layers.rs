use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, Mode, Module, Param, ParamKind, Tensor};
use crate::{Error, Lcg64, Result};

fn join(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        String::from(leaf)
    } else {
        format!("{prefix}.{leaf}")
    }
}

/// 2-D convolution, weights laid out `(ky, kx, cin) × cout` so that an
/// im2col row times the weight matrix is one output pixel.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug)]
pub struct ConvCache {
    cols: Vec<f32>,
    in_shape: (usize, usize, usize, usize),
    out_hw: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut Lcg64,
    ) -> Self {
        let fan_in = kernel * kernel * cin;
        // He-normal initialisation for rectified activations
        let std = libm::sqrt(2.0 / fan_in as f64);
        let w = (0..fan_in * cout).map(|_| (rng.normal() * std) as f32).collect();
        let weight = Param::new(
            join(name, "weight"),
            ParamKind::Weight,
            vec![kernel, kernel, cin, cout],
            w,
        );
        let bias = bias.then(|| {
            Param::new(join(name, "bias"), ParamKind::Bias, vec![cout], vec![0.0; cout])
        });
        Self {
            weight,
            bias,
            cin,
            cout,
            kernel,
            stride,
            pad,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &Tensor, oh: usize, ow: usize) -> Vec<f32> {
        let (k, s, p, cin) = (self.kernel, self.stride, self.pad as isize, self.cin);
        let kkc = k * k * cin;
        let mut cols = vec![0.0f32; x.n * oh * ow * kkc];
        for b in 0..x.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = ((b * oh + oy) * ow + ox) * kkc;
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p;
                            if ix < 0 || ix >= x.w as isize {
                                continue;
                            }
                            let src = ((b * x.h + iy as usize) * x.w + ix as usize) * cin;
                            let dst = base + (ky * k + kx) * cin;
                            cols[dst..dst + cin].copy_from_slice(&x.data[src..src + cin]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[f32], shape: (usize, usize, usize, usize), oh: usize, ow: usize) -> Tensor {
        let (n, h, w, cin) = shape;
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let kkc = k * k * cin;
        let mut dx = Tensor::zeros(n, h, w, cin);
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = ((b * oh + oy) * ow + ox) * kkc;
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = ((b * h + iy as usize) * w + ix as usize) * cin;
                            let src = base + (ky * k + kx) * cin;
                            for (d, &g) in dx.data[dst..dst + cin].iter_mut().zip(&dcols[src..src + cin]) {
                                *d += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ConvCache)> {
        if x.c != self.cin {
            return Err(Error::ShapeViolation(format!(
                "{}: expected {} input channels, got {}",
                self.weight.name, self.cin, x.c
            )));
        }
        if x.h + 2 * self.pad < self.kernel || x.w + 2 * self.pad < self.kernel {
            return Err(Error::ShapeViolation(format!(
                "{}: input {}x{} smaller than kernel",
                self.weight.name, x.h, x.w
            )));
        }
        let (oh, ow) = self.out_size(x.h, x.w);
        let cols = self.im2col(x, oh, ow);
        let rows = x.n * oh * ow;
        let kkc = self.kernel * self.kernel * self.cin;
        let mut out = Tensor::zeros(x.n, oh, ow, self.cout);
        gemm(rows, kkc, self.cout, &cols, false, &self.weight.value, false, 0.0, &mut out.data);
        if let Some(b) = &self.bias {
            for row in out.data.chunks_exact_mut(self.cout) {
                for (o, &bv) in row.iter_mut().zip(&b.value) {
                    *o += bv;
                }
            }
        }
        let cache = ConvCache {
            cols,
            in_shape: x.shape(),
            out_hw: (oh, ow),
        };
        Ok((out, cache))
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(&mut self, cache: &ConvCache, dy: &Tensor, need_input_grad: bool) -> Option<Tensor> {
        let (oh, ow) = cache.out_hw;
        let rows = cache.in_shape.0 * oh * ow;
        let kkc = self.kernel * self.kernel * self.cin;
        debug_assert_eq!(dy.data.len(), rows * self.cout);
        gemm(kkc, rows, self.cout, &cache.cols, true, &dy.data, false, 1.0, &mut self.weight.grad);
        if let Some(b) = &mut self.bias {
            for row in dy.data.chunks_exact(self.cout) {
                for (g, &d) in b.grad.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        if !need_input_grad {
            return None;
        }
        let mut dcols = vec![0.0f32; rows * kkc];
        gemm(rows, self.cout, kkc, &dy.data, false, &self.weight.value, true, 0.0, &mut dcols);
        Some(self.col2im(&dcols, cache.in_shape, oh, ow))
    }
}

impl Module for Conv2d {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Per-channel batch normalization over all `n·h·w` positions.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f32,
    pub eps: f32,
}

#[derive(Debug)]
pub struct BnCache {
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
    mode: Mode,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize, momentum: f32, eps: f32) -> Self {
        let p = |leaf: &str, kind, v: f32| Param::new(join(name, leaf), kind, vec![channels], vec![v; channels]);
        Self {
            gamma: p("gamma", ParamKind::Norm, 1.0),
            beta: p("beta", ParamKind::Norm, 0.0),
            running_mean: p("running_mean", ParamKind::Buffer, 0.0),
            running_var: p("running_var", ParamKind::Buffer, 1.0),
            momentum,
            eps,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> (Tensor, BnCache) {
        let c = x.c;
        let m = x.rows();
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                let mut sum = vec![0.0f64; c];
                let mut sq = vec![0.0f64; c];
                for row in x.data.chunks_exact(c) {
                    for ((s, q), &v) in sum.iter_mut().zip(&mut sq).zip(row) {
                        *s += v as f64;
                        *q += v as f64 * v as f64;
                    }
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / m as f64).collect();
                let var: Vec<f64> = sq
                    .iter()
                    .zip(&mean)
                    .map(|(q, mu)| (q / m as f64 - mu * mu).max(0.0))
                    .collect();
                let mom = self.momentum as f64;
                let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
                for i in 0..c {
                    let rm = &mut self.running_mean.value[i];
                    *rm = ((1.0 - mom) * *rm as f64 + mom * mean[i]) as f32;
                    let rv = &mut self.running_var.value[i];
                    *rv = ((1.0 - mom) * *rv as f64 + mom * var[i] * unbias) as f32;
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.value.iter().map(|&v| v as f64).collect(),
                self.running_var.value.iter().map(|&v| v as f64).collect(),
            ),
        };
        let inv_std: Vec<f32> = var
            .iter()
            .map(|v| (1.0 / libm::sqrt(v + self.eps as f64)) as f32)
            .collect();
        let mean32: Vec<f32> = mean.iter().map(|&v| v as f32).collect();
        let mut xhat = vec![0.0f32; x.data.len()];
        let mut out = Tensor::zeros(x.n, x.h, x.w, c);
        for ((xr, hr), or) in x
            .data
            .chunks_exact(c)
            .zip(xhat.chunks_exact_mut(c))
            .zip(out.data.chunks_exact_mut(c))
        {
            for i in 0..c {
                let h = (xr[i] - mean32[i]) * inv_std[i];
                hr[i] = h;
                or[i] = self.gamma.value[i] * h + self.beta.value[i];
            }
        }
        (out, BnCache { xhat, inv_std, mode })
    }

    pub fn backward(&mut self, cache: &BnCache, dy: &Tensor) -> Tensor {
        let c = dy.c;
        let m = dy.rows() as f64;
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for (dr, hr) in dy.data.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for i in 0..c {
                sum_dy[i] += dr[i] as f64;
                sum_dy_xhat[i] += dr[i] as f64 * hr[i] as f64;
            }
        }
        for i in 0..c {
            self.gamma.grad[i] += sum_dy_xhat[i] as f32;
            self.beta.grad[i] += sum_dy[i] as f32;
        }
        let mut dx = Tensor::zeros(dy.n, dy.h, dy.w, c);
        match cache.mode {
            Mode::Train => {
                let mean_dy: Vec<f32> = sum_dy.iter().map(|s| (s / m) as f32).collect();
                let mean_dyx: Vec<f32> = sum_dy_xhat.iter().map(|s| (s / m) as f32).collect();
                for ((dr, hr), xr) in dy
                    .data
                    .chunks_exact(c)
                    .zip(cache.xhat.chunks_exact(c))
                    .zip(dx.data.chunks_exact_mut(c))
                {
                    for i in 0..c {
                        let scale = self.gamma.value[i] * cache.inv_std[i];
                        xr[i] = scale * (dr[i] - mean_dy[i] - hr[i] * mean_dyx[i]);
                    }
                }
            }
            Mode::Eval => {
                for (dr, xr) in dy.data.chunks_exact(c).zip(dx.data.chunks_exact_mut(c)) {
                    for i in 0..c {
                        xr[i] = dr[i] * self.gamma.value[i] * cache.inv_std[i];
                    }
                }
            }
        }
        dx
    }
}

impl Module for BatchNorm2d {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

pub fn relu(x: &mut Tensor) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `dy` in place using the rectifier's output.
pub fn relu_backward(out: &Tensor, dy: &mut Tensor) {
    for (g, &o) in dy.data.iter_mut().zip(&out.data) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug)]
pub struct PoolCache {
    argmax: Vec<u32>,
    in_shape: (usize, usize, usize, usize),
}

impl MaxPool2d {
    pub fn forward(&self, x: &Tensor) -> (Tensor, PoolCache) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let oh = (x.h + 2 * self.pad - k) / s + 1;
        let ow = (x.w + 2 * self.pad - k) / s + 1;
        let c = x.c;
        let mut out = Tensor::zeros(x.n, oh, ow, c);
        let mut argmax = vec![0u32; out.data.len()];
        for b in 0..x.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let obase = ((b * oh + oy) * ow + ox) * c;
                    for ch in 0..c {
                        let mut best = f32::NEG_INFINITY;
                        let mut arg = 0usize;
                        for ky in 0..k {
                            let iy = (oy * s + ky) as isize - p;
                            if iy < 0 || iy >= x.h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * s + kx) as isize - p;
                                if ix < 0 || ix >= x.w as isize {
                                    continue;
                                }
                                let idx = ((b * x.h + iy as usize) * x.w + ix as usize) * c + ch;
                                if x.data[idx] > best {
                                    best = x.data[idx];
                                    arg = idx;
                                }
                            }
                        }
                        out.data[obase + ch] = best;
                        argmax[obase + ch] = arg as u32;
                    }
                }
            }
        }
        (
            out,
            PoolCache {
                argmax,
                in_shape: x.shape(),
            },
        )
    }

    pub fn backward(&self, cache: &PoolCache, dy: &Tensor) -> Tensor {
        let (n, h, w, c) = cache.in_shape;
        let mut dx = Tensor::zeros(n, h, w, c);
        for (&i, &g) in cache.argmax.iter().zip(&dy.data) {
            dx.data[i as usize] += g;
        }
        dx
    }
}

/// Mean over spatial positions: `n×h×w×c → n×c`.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let hw = x.h * x.w;
    let mut out = vec![0.0f32; x.n * x.c];
    for b in 0..x.n {
        let dst = &mut out[b * x.c..(b + 1) * x.c];
        let mut acc = vec![0.0f64; x.c];
        for row in x.data[b * hw * x.c..(b + 1) * hw * x.c].chunks_exact(x.c) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v as f64;
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d = (a / hw as f64) as f32;
        }
    }
    Tensor {
        n: x.n,
        h: 1,
        w: 1,
        c: x.c,
        data: out,
    }
}

pub fn global_avg_pool_backward(dy: &Tensor, h: usize, w: usize) -> Tensor {
    let hw = h * w;
    let scale = 1.0 / hw as f32;
    let mut dx = Tensor::zeros(dy.n, h, w, dy.c);
    for b in 0..dy.n {
        let g = &dy.data[b * dy.c..(b + 1) * dy.c];
        for row in dx.data[b * hw * dy.c..(b + 1) * hw * dy.c].chunks_exact_mut(dy.c) {
            for (d, &gv) in row.iter_mut().zip(g) {
                *d = gv * scale;
            }
        }
    }
    dx
}

/// Fully connected layer `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    pub d_in: usize,
    pub d_out: usize,
}

#[derive(Debug)]
pub struct LinearCache {
    input: Vec<f32>,
    rows: usize,
}

impl Linear {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut Lcg64) -> Self {
        let bound = 1.0 / libm::sqrt(d_in as f64);
        let mut draw = |n: usize| -> Vec<f32> {
            (0..n).map(|_| rng.uniform(-bound, bound) as f32).collect()
        };
        let w = draw(d_in * d_out);
        let b = draw(d_out);
        Self {
            weight: Param::new(join(name, "weight"), ParamKind::Weight, vec![d_in, d_out], w),
            bias: Param::new(join(name, "bias"), ParamKind::Bias, vec![d_out], b),
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LinearCache)> {
        let rows = x.rows();
        if x.c != self.d_in {
            return Err(Error::ShapeViolation(format!(
                "{}: expected {} features, got {}",
                self.weight.name, self.d_in, x.c
            )));
        }
        let mut out = vec![0.0f32; rows * self.d_out];
        gemm(rows, self.d_in, self.d_out, &x.data, false, &self.weight.value, false, 0.0, &mut out);
        for row in out.chunks_exact_mut(self.d_out) {
            for (o, &b) in row.iter_mut().zip(&self.bias.value) {
                *o += b;
            }
        }
        let cache = LinearCache {
            input: x.data.clone(),
            rows,
        };
        Ok((Tensor::matrix(rows, self.d_out, out)?, cache))
    }

    pub fn backward(&mut self, cache: &LinearCache, dy: &Tensor) -> Tensor {
        let rows = cache.rows;
        gemm(self.d_in, rows, self.d_out, &cache.input, true, &dy.data, false, 1.0, &mut self.weight.grad);
        for row in dy.data.chunks_exact(self.d_out) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0f32; rows * self.d_in];
        gemm(rows, self.d_out, self.d_in, &dy.data, false, &self.weight.value, true, 0.0, &mut dx);
        Tensor {
            n: rows,
            h: 1,
            w: 1,
            c: self.d_in,
            data: dx,
        }
    }
}

impl Module for Linear {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
