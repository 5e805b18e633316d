//! LARS with momentum.
//!
//! Weights get a layer-wise trust ratio `‖w‖ / (‖g‖ + wd·‖w‖ + ε)` and weight
//! decay; biases and normalization parameters are excluded from both and
//! follow plain momentum SGD.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::nn::{Module, ParamKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LarsConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub trust_coefficient: f64,
    pub eps: f64,
}

impl Default for LarsConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 1e-6,
            trust_coefficient: 1e-3,
            eps: 1e-9,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

/// Trust ratio for one tensor. A zero-norm tensor gets 1 so that it can
/// leave the origin, as does a tensor with nothing to update.
pub fn trust_ratio(w: &[f64], g: &[f64], weight_decay: f64, eps: f64) -> f64 {
    let wn = norm(w);
    let denom = norm(g) + weight_decay * wn + eps;
    if wn == 0.0 || denom == 0.0 {
        return 1.0;
    }
    wn / denom
}

/// One LARS update of a single tensor, in place.
///
/// `m ← μ·m + local_lr·(g + wd·w)`, `w ← w − m` with
/// `local_lr = lr·η·λ`; excluded tensors use `λ = η = 1` and `wd = 0`.
pub fn lars_update(w: &mut [f64], g: &[f64], m: &mut [f64], cfg: &LarsConfig, lr: f64, excluded: bool) {
    debug_assert!(w.len() == g.len() && w.len() == m.len());
    let (local_lr, wd) = if excluded {
        (lr, 0.0)
    } else {
        let lambda = trust_ratio(w, g, cfg.weight_decay, cfg.eps);
        (lr * cfg.trust_coefficient * lambda, cfg.weight_decay)
    };
    for ((wi, &gi), mi) in w.iter_mut().zip(g).zip(m.iter_mut()) {
        *mi = cfg.momentum * *mi + local_lr * (gi + wd * *wi);
        *wi -= *mi;
    }
}

/// Momentum buffers for every trainable tensor of a module, keyed by visit
/// order, plus the set of parameter names excluded from trust-ratio scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: LarsConfig,
    pub momentum_buffers: Vec<Vec<f64>>,
    pub excluded: BTreeSet<String>,
    names: Vec<String>,
}

impl OptimizerState {
    pub fn new(module: &dyn Module, config: LarsConfig) -> Self {
        let mut momentum_buffers = Vec::new();
        let mut excluded = BTreeSet::new();
        let mut names = Vec::new();
        module.visit(&mut |p| {
            if !p.trainable() {
                return;
            }
            if matches!(p.kind, ParamKind::Bias | ParamKind::Norm) {
                excluded.insert(p.name.clone());
            }
            names.push(p.name.clone());
            momentum_buffers.push(vec![0.0; p.value.len()]);
        });
        Self {
            config,
            momentum_buffers,
            excluded,
            names,
        }
    }

    /// Apply one update to every trainable tensor using the accumulated
    /// gradients. Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, module: &mut dyn Module, lr: f64, step: u64) -> Result<()> {
        let mut finite = true;
        module.visit(&mut |p| {
            if p.trainable() && !p.grad.iter().all(|g| g.is_finite()) {
                finite = false;
            }
        });
        if !finite {
            return Err(Error::Divergence { step });
        }
        let mut idx = 0;
        let mut mismatch = false;
        let (cfg, buffers, excluded, names) = (&self.config, &mut self.momentum_buffers, &self.excluded, &self.names);
        module.visit_mut(&mut |p| {
            if !p.trainable() {
                return;
            }
            if idx >= names.len() || names[idx] != p.name {
                mismatch = true;
                return;
            }
            let mut w: Vec<f64> = p.value.iter().map(|&v| v as f64).collect();
            let g: Vec<f64> = p.grad.iter().map(|&v| v as f64).collect();
            lars_update(&mut w, &g, &mut buffers[idx], cfg, lr, excluded.contains(&p.name));
            for (dst, src) in p.value.iter_mut().zip(&w) {
                *dst = *src as f32;
            }
            idx += 1;
        });
        if mismatch || idx != self.names.len() {
            return Err(Error::InvalidArgument(String::from(
                "optimizer state does not match the module's parameters",
            )));
        }
        let mut finite = true;
        module.visit(&mut |p| finite &= p.value.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Divergence { step });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;
    use crate::Lcg64;

    fn cfg(momentum: f64, wd: f64, eta: f64) -> LarsConfig {
        LarsConfig {
            momentum,
            weight_decay: wd,
            trust_coefficient: eta,
            eps: 0.0,
        }
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut w = vec![0.5, -2.0];
        let mut m = vec![0.0; 2];
        lars_update(&mut w, &[0.0, 0.0], &mut m, &cfg(0.9, 0.0, 1e-3), 0.1, false);
        assert_eq!(w, vec![0.5, -2.0]);
    }

    #[test]
    fn scalar_hand_example() {
        let mut w = vec![1.0];
        let mut m = vec![0.0];
        lars_update(&mut w, &[1.0], &mut m, &cfg(0.0, 0.0, 1.0), 0.1, false);
        assert!((w[0] - 0.9).abs() < 1e-15);
        let mut b = vec![1.0];
        let mut mb = vec![0.0];
        lars_update(&mut b, &[1.0], &mut mb, &cfg(0.0, 0.0, 1.0), 0.1, true);
        assert_eq!(b, w);
    }

    #[test]
    fn excluded_matches_sgd_whatever_the_config() {
        let mut rng = Lcg64::new(4);
        let c = cfg(0.9, 0.5, 1e-3);
        let mut w: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let mut w_ref = w.clone();
        let (mut m, mut m_ref) = (vec![0.0; 10], vec![0.0; 10]);
        for _ in 0..5 {
            let g: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
            lars_update(&mut w, &g, &mut m, &c, 0.1, true);
            for i in 0..10 {
                m_ref[i] = 0.9 * m_ref[i] + 0.1 * g[i];
                w_ref[i] -= m_ref[i];
            }
        }
        assert_eq!(w, w_ref);
    }

    struct Two(Vec<Param>);

    impl Module for Two {
        fn visit(&self, f: &mut dyn FnMut(&Param)) {
            self.0.iter().for_each(f)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
            self.0.iter_mut().for_each(f)
        }
    }

    fn module() -> Two {
        let mut w = Param::new("w".into(), ParamKind::Weight, vec![2], vec![1.0, 2.0]);
        w.grad = vec![0.1, 0.1];
        let mut b = Param::new("b".into(), ParamKind::Bias, vec![1], vec![0.0]);
        b.grad = vec![1.0];
        let buf = Param::new("running".into(), ParamKind::Buffer, vec![1], vec![7.0]);
        Two(vec![w, b, buf])
    }

    #[test]
    fn module_step_excludes_bias_and_skips_buffers() {
        let mut m = module();
        let mut st = OptimizerState::new(&m, LarsConfig::default());
        assert!(st.excluded.contains("b") && !st.excluded.contains("w"));
        assert_eq!(st.momentum_buffers.len(), 2);
        st.step(&mut m, 0.1, 0).unwrap();
        assert!((m.0[1].value[0] + 0.1).abs() < 1e-7);
        assert_eq!(m.0[2].value[0], 7.0);
        assert!(m.0[0].value[0] < 1.0);
    }

    #[test]
    fn non_finite_gradient_diverges_without_update() {
        let mut m = module();
        m.0[0].grad[1] = f32::NAN;
        let mut st = OptimizerState::new(&m, LarsConfig::default());
        assert_eq!(st.step(&mut m, 0.1, 17), Err(Error::Divergence { step: 17 }));
        assert_eq!(m.0[0].value, vec![1.0, 2.0]);
    }
}
