use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// How the optimizer treats a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution / linear weights: trust-ratio scaling and weight decay.
    Weight,
    Bias,
    /// Normalization-layer scale and shift.
    Norm,
    /// Non-trainable state such as running statistics.
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn new(name: String, kind: ParamKind, shape: Vec<usize>, value: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = if kind == ParamKind::Buffer {
            Vec::new()
        } else {
            vec![0.0; value.len()]
        };
        Self {
            name,
            kind,
            shape,
            value,
            grad,
        }
    }

    pub fn trainable(&self) -> bool {
        self.kind != ParamKind::Buffer
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| {
            if p.trainable() {
                n += p.value.len()
            }
        });
        n
    }
}
