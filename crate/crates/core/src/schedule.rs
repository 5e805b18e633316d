//! Per-step learning rate: linear warmup then half-cosine decay over a fixed
//! horizon, evaluated at fractional epochs.

use core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub warmup_epochs: f64,
    pub horizon_epochs: f64,
    pub train_epochs: usize,
    pub steps_per_epoch: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.1,
            warmup_epochs: 10.0,
            horizon_epochs: 1000.0,
            train_epochs: 500,
            steps_per_epoch: 1,
        }
    }
}

impl ScheduleConfig {
    pub fn epoch_of(&self, step: u64) -> f64 {
        step as f64 / self.steps_per_epoch.max(1) as f64
    }
}

/// Learning rate at fractional epoch `e`.
pub fn lr_at_epoch(e: f64, cfg: &ScheduleConfig) -> f64 {
    if e <= cfg.warmup_epochs {
        return cfg.base_lr * e.max(0.0) / cfg.warmup_epochs;
    }
    if e >= cfg.horizon_epochs {
        return 0.0;
    }
    let t = (e - cfg.warmup_epochs) / (cfg.horizon_epochs - cfg.warmup_epochs);
    cfg.base_lr * 0.5 * (1.0 + libm::cos(PI * t))
}

pub fn lr_at(step: u64, cfg: &ScheduleConfig) -> f64 {
    lr_at_epoch(cfg.epoch_of(step), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipe_points() {
        let cfg = ScheduleConfig::default();
        assert_eq!(lr_at_epoch(0.0, &cfg), 0.0);
        assert!((lr_at_epoch(10.0, &cfg) - 0.1).abs() < 1e-15);
        assert!((lr_at_epoch(505.0, &cfg) - 0.05).abs() < 1e-9);
        assert!((lr_at_epoch(5.0, &cfg) - 0.05).abs() < 1e-15);
        assert_eq!(lr_at_epoch(1000.0, &cfg), 0.0);
        assert_eq!(lr_at_epoch(2000.0, &cfg), 0.0);
    }

    #[test]
    fn continuous_at_warmup_end() {
        let cfg = ScheduleConfig::default();
        let (a, b) = (lr_at_epoch(10.0 - 1e-9, &cfg), lr_at_epoch(10.0 + 1e-9, &cfg));
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn stepped_with_fractional_epochs() {
        let cfg = ScheduleConfig {
            steps_per_epoch: 4,
            ..ScheduleConfig::default()
        };
        assert!((lr_at(2, &cfg) - 0.1 * 0.5 / 10.0).abs() < 1e-15);
        assert!((lr_at(40, &cfg) - 0.1).abs() < 1e-15);
        // strictly increasing through warmup
        assert!((0..40).all(|s| lr_at(s, &cfg) < lr_at(s + 1, &cfg)));
    }
}
