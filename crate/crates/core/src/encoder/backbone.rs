//! Per-patch backbones mapping `P × 32 × 32 × C` to `P × 512`.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::nn::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm2d, BnCache, Conv2d,
    ConvCache, Linear, LinearCache, MaxPool2d, Mode, Module, Param, PoolCache, Tensor,
};
use crate::{Lcg64, Result};

pub const EMBED_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    ResNet18,
    TinyCnn,
}

impl BackboneKind {
    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::ResNet18 => "resnet18",
            BackboneKind::TinyCnn => "tiny_cnn",
        }
    }
}

impl core::str::FromStr for BackboneKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "resnet18" => Ok(BackboneKind::ResNet18),
            "tiny_cnn" => Ok(BackboneKind::TinyCnn),
            other => Err(crate::Error::InvalidArgument(format!("unknown backbone {other:?}"))),
        }
    }
}

/// conv → batch norm → ReLU
#[derive(Debug, Clone)]
struct ConvBnRelu {
    conv: Conv2d,
    bn: BatchNorm2d,
}

#[derive(Debug)]
struct CbrCache {
    conv: ConvCache,
    bn: BnCache,
    out: Tensor,
}

impl ConvBnRelu {
    #[allow(clippy::too_many_arguments)]
    fn new(name: &str, cin: usize, cout: usize, k: usize, s: usize, p: usize, bn_momentum: f32, rng: &mut Lcg64) -> Self {
        Self {
            conv: Conv2d::new(&format!("{name}.conv"), cin, cout, k, s, p, false, rng),
            bn: BatchNorm2d::new(&format!("{name}.bn"), cout, bn_momentum, 1e-5),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, CbrCache)> {
        let (y, conv) = self.conv.forward(x)?;
        let (mut y, bn) = self.bn.forward(&y, mode);
        relu(&mut y);
        let out = y.clone();
        Ok((y, CbrCache { conv, bn, out }))
    }

    fn backward(&mut self, cache: &CbrCache, mut dy: Tensor, need_dx: bool) -> Option<Tensor> {
        relu_backward(&cache.out, &mut dy);
        let d = self.bn.backward(&cache.bn, &dy);
        self.conv.backward(&cache.conv, &d, need_dx)
    }

    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.conv.visit(f);
        self.bn.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv.visit_mut(f);
        self.bn.visit_mut(f);
    }
}

/// Desk-scale backbone: three stride-2 conv blocks (32→16→8→4), global
/// average pooling and a linear map to 512.
#[derive(Debug, Clone)]
pub struct TinyCnn {
    blocks: [ConvBnRelu; 3],
    fc: Linear,
}

pub const TINY_WIDTHS: [usize; 3] = [8, 16, 32];

#[derive(Debug)]
pub struct TinyCache {
    blocks: Vec<CbrCache>,
    pooled_hw: (usize, usize),
    fc: LinearCache,
}

impl TinyCnn {
    pub fn new(in_channels: usize, bn_momentum: f32, rng: &mut Lcg64) -> Self {
        let [a, b, c] = TINY_WIDTHS;
        Self {
            blocks: [
                ConvBnRelu::new("backbone.block1", in_channels, a, 3, 2, 1, bn_momentum, rng),
                ConvBnRelu::new("backbone.block2", a, b, 3, 2, 1, bn_momentum, rng),
                ConvBnRelu::new("backbone.block3", b, c, 3, 2, 1, bn_momentum, rng),
            ],
            fc: Linear::new("backbone.fc", c, EMBED_DIM, rng),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, TinyCache)> {
        let mut caches = Vec::with_capacity(3);
        let mut h = x.clone();
        for block in &mut self.blocks {
            let (y, c) = block.forward(&h, mode)?;
            caches.push(c);
            h = y;
        }
        let pooled_hw = (h.h, h.w);
        let g = global_avg_pool(&h);
        let (out, fc) = self.fc.forward(&g)?;
        Ok((
            out,
            TinyCache {
                blocks: caches,
                pooled_hw,
                fc,
            },
        ))
    }

    fn backward(&mut self, cache: TinyCache, dy: &Tensor) {
        let dg = self.fc.backward(&cache.fc, dy);
        let mut d = global_avg_pool_backward(&dg, cache.pooled_hw.0, cache.pooled_hw.1);
        for (i, (block, c)) in self.blocks.iter_mut().zip(&cache.blocks).enumerate().rev() {
            match block.backward(c, d, i > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
    }
}

impl Module for TinyCnn {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        for b in &self.blocks {
            b.visit(f);
        }
        self.fc.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for b in &mut self.blocks {
            b.visit_mut(f);
        }
        self.fc.visit_mut(f);
    }
}

#[derive(Debug, Clone)]
struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    downsample: Option<(Conv2d, BatchNorm2d)>,
}

#[derive(Debug)]
struct BlockCache {
    c1: ConvCache,
    b1: BnCache,
    r1: Tensor,
    c2: ConvCache,
    b2: BnCache,
    ds: Option<(ConvCache, BnCache)>,
    out: Tensor,
}

impl BasicBlock {
    fn new(name: &str, cin: usize, cout: usize, stride: usize, mom: f32, rng: &mut Lcg64) -> Self {
        let downsample = (stride != 1 || cin != cout).then(|| {
            (
                Conv2d::new(&format!("{name}.downsample.conv"), cin, cout, 1, stride, 0, false, rng),
                BatchNorm2d::new(&format!("{name}.downsample.bn"), cout, mom, 1e-5),
            )
        });
        Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), cin, cout, 3, stride, 1, false, rng),
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), cout, mom, 1e-5),
            conv2: Conv2d::new(&format!("{name}.conv2"), cout, cout, 3, 1, 1, false, rng),
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), cout, mom, 1e-5),
            downsample,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, BlockCache)> {
        let (y, c1) = self.conv1.forward(x)?;
        let (mut y, b1) = self.bn1.forward(&y, mode);
        relu(&mut y);
        let r1 = y.clone();
        let (y, c2) = self.conv2.forward(&y)?;
        let (mut y, b2) = self.bn2.forward(&y, mode);
        let (ds, shortcut) = match &mut self.downsample {
            Some((conv, bn)) => {
                let (s, cc) = conv.forward(x)?;
                let (s, bc) = bn.forward(&s, mode);
                (Some((cc, bc)), s)
            }
            None => (None, x.clone()),
        };
        for (o, s) in y.data.iter_mut().zip(&shortcut.data) {
            *o += s;
        }
        relu(&mut y);
        let out = y.clone();
        Ok((
            y,
            BlockCache {
                c1,
                b1,
                r1,
                c2,
                b2,
                ds,
                out,
            },
        ))
    }

    fn backward(&mut self, cache: &BlockCache, mut dy: Tensor) -> Tensor {
        relu_backward(&cache.out, &mut dy);
        let d = self.bn2.backward(&cache.b2, &dy);
        let mut d = self.conv2.backward(&cache.c2, &d, true).expect("input grad");
        relu_backward(&cache.r1, &mut d);
        let d = self.bn1.backward(&cache.b1, &d);
        let mut dx = self.conv1.backward(&cache.c1, &d, true).expect("input grad");
        let d_short = match (&mut self.downsample, &cache.ds) {
            (Some((conv, bn)), Some((cc, bc))) => {
                let d = bn.backward(bc, &dy);
                conv.backward(cc, &d, true).expect("input grad")
            }
            _ => dy,
        };
        for (a, b) in dx.data.iter_mut().zip(&d_short.data) {
            *a += b;
        }
        dx
    }
}

impl Module for BasicBlock {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.conv1.visit(f);
        self.bn1.visit(f);
        self.conv2.visit(f);
        self.bn2.visit(f);
        if let Some((c, b)) = &self.downsample {
            c.visit(f);
            b.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.conv1.visit_mut(f);
        self.bn1.visit_mut(f);
        self.conv2.visit_mut(f);
        self.bn2.visit_mut(f);
        if let Some((c, b)) = &mut self.downsample {
            c.visit_mut(f);
            b.visit_mut(f);
        }
    }
}

/// ResNet-18 with a configurable stem input width. A 32×32 patch reaches
/// layer4 at 1×1, so global pooling yields the 512-vector directly.
#[derive(Debug, Clone)]
pub struct ResNet18 {
    stem: ConvBnRelu,
    pool: MaxPool2d,
    blocks: Vec<BasicBlock>,
}

#[derive(Debug)]
pub struct ResNetCache {
    stem: CbrCache,
    pool: PoolCache,
    blocks: Vec<BlockCache>,
    pooled_hw: (usize, usize),
}

impl ResNet18 {
    pub fn new(in_channels: usize, bn_momentum: f32, rng: &mut Lcg64) -> Self {
        let stem = ConvBnRelu::new("backbone.stem", in_channels, 64, 7, 2, 3, bn_momentum, rng);
        let mut blocks = Vec::with_capacity(8);
        let mut cin = 64;
        for (layer, &(cout, stride)) in [(64, 1), (128, 2), (256, 2), (512, 2)].iter().enumerate() {
            for b in 0..2 {
                let s = if b == 0 { stride } else { 1 };
                let name = format!("backbone.layer{}.{}", layer + 1, b);
                blocks.push(BasicBlock::new(&name, cin, cout, s, bn_momentum, rng));
                cin = cout;
            }
        }
        Self {
            stem,
            pool: MaxPool2d {
                kernel: 3,
                stride: 2,
                pad: 1,
            },
            blocks,
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, ResNetCache)> {
        let (h, stem) = self.stem.forward(x, mode)?;
        let (mut h, pool) = self.pool.forward(&h);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (y, c) = block.forward(&h, mode)?;
            caches.push(c);
            h = y;
        }
        let pooled_hw = (h.h, h.w);
        Ok((
            global_avg_pool(&h),
            ResNetCache {
                stem,
                pool,
                blocks: caches,
                pooled_hw,
            },
        ))
    }

    fn backward(&mut self, cache: ResNetCache, dy: &Tensor) {
        let mut d = global_avg_pool_backward(dy, cache.pooled_hw.0, cache.pooled_hw.1);
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            d = block.backward(c, d);
        }
        let d = self.pool.backward(&cache.pool, &d);
        self.stem.backward(&cache.stem, d, false);
    }
}

impl Module for ResNet18 {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.stem.visit(f);
        for b in &self.blocks {
            b.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.stem.visit_mut(f);
        for b in &mut self.blocks {
            b.visit_mut(f);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backbone {
    TinyCnn(TinyCnn),
    ResNet18(Box<ResNet18>),
}

#[derive(Debug)]
pub enum BackboneCache {
    TinyCnn(TinyCache),
    ResNet18(ResNetCache),
}

impl Backbone {
    pub fn new(kind: BackboneKind, in_channels: usize, bn_momentum: f32, rng: &mut Lcg64) -> Self {
        match kind {
            BackboneKind::TinyCnn => Backbone::TinyCnn(TinyCnn::new(in_channels, bn_momentum, rng)),
            BackboneKind::ResNet18 => {
                Backbone::ResNet18(Box::new(ResNet18::new(in_channels, bn_momentum, rng)))
            }
        }
    }

    /// `P × 32 × 32 × C` patches to a `P × 512` matrix.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, BackboneCache)> {
        match self {
            Backbone::TinyCnn(m) => m.forward(x, mode).map(|(y, c)| (y, BackboneCache::TinyCnn(c))),
            Backbone::ResNet18(m) => m.forward(x, mode).map(|(y, c)| (y, BackboneCache::ResNet18(c))),
        }
    }

    pub fn backward(&mut self, cache: BackboneCache, dy: &Tensor) {
        match (self, cache) {
            (Backbone::TinyCnn(m), BackboneCache::TinyCnn(c)) => m.backward(c, dy),
            (Backbone::ResNet18(m), BackboneCache::ResNet18(c)) => m.backward(c, dy),
            _ => panic!("backbone cache does not match backbone"),
        }
    }
}

impl Module for Backbone {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        match self {
            Backbone::TinyCnn(m) => m.visit(f),
            Backbone::ResNet18(m) => m.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            Backbone::TinyCnn(m) => m.visit_mut(f),
            Backbone::ResNet18(m) => m.visit_mut(f),
        }
    }
}
