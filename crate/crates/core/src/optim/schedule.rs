//! Reduce-on-plateau learning-rate policy.

use crate::error::{Error, Result};
use alloc::format;

/// A metric improves only if it drops below the best seen by at least this
/// margin.
pub const IMPROVEMENT_EPS: f64 = 1e-6;

/// Multiplies the learning rate by `factor` once the monitored metric has
/// failed to improve for more than `patience` consecutive updates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: Option<f64>,
    since_improvement: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize, min_lr: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "plateau factor must lie in (0, 1), got {factor}"
            )));
        }
        if patience == 0 {
            return Err(Error::InvalidSpec("plateau patience must be at least 1".into()));
        }
        if min_lr < 0.0 {
            return Err(Error::InvalidSpec(format!("min_lr {min_lr} is negative")));
        }
        Ok(PlateauSchedule {
            factor,
            patience,
            min_lr,
            best: None,
            since_improvement: 0,
        })
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn since_improvement(&self) -> usize {
        self.since_improvement
    }

    /// Reinstates checkpointed progress.
    pub fn restore_progress(&mut self, best: Option<f64>, since_improvement: usize) {
        self.best = best;
        self.since_improvement = since_improvement;
    }

    /// Feeds one epoch's monitored metric (lower is better) and returns the
    /// learning rate to use next.
    pub fn update(&mut self, current_lr: f64, metric: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(best) => metric < best - IMPROVEMENT_EPS,
        };
        if improved {
            self.best = Some(metric);
            self.since_improvement = 0;
            return current_lr;
        }
        self.since_improvement += 1;
        if self.since_improvement > self.patience {
            self.since_improvement = 0;
            (current_lr * self.factor).max(self.min_lr)
        } else {
            current_lr
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_improvement_keeps_lr() {
        let mut s = PlateauSchedule::new(0.7, 5, 0.0).unwrap();
        let mut lr = 2e-4;
        for metric in [1.0, 0.9, 0.8] {
            lr = s.update(lr, metric);
        }
        assert_eq!(lr, 2e-4);
    }

    #[test]
    fn six_stagnant_epochs_trigger_one_decay() {
        let mut s = PlateauSchedule::new(0.7, 5, 0.0).unwrap();
        let mut lr: f64 = 2e-4;
        lr = s.update(lr, 1.0);
        for _ in 0..5 {
            lr = s.update(lr, 1.0);
            assert_eq!(lr, 2e-4, "decayed too early");
        }
        lr = s.update(lr, 1.0);
        assert!((lr - 1.4e-4).abs() < 1e-16, "lr {lr}");
    }

    #[test]
    fn two_full_stagnation_cycles_decay_twice() {
        let mut s = PlateauSchedule::new(0.7, 5, 0.0).unwrap();
        let mut lr: f64 = 2e-4;
        lr = s.update(lr, 1.0);
        for _ in 0..12 {
            lr = s.update(lr, 1.0);
        }
        let expected = 2e-4 * 0.7 * 0.7;
        assert!((lr - expected).abs() < 1e-15, "lr {lr} vs {expected}");
        assert!((lr - 9.8e-5).abs() / 9.8e-5 < 1e-12);
    }

    #[test]
    fn tiny_improvements_below_threshold_do_not_reset() {
        let mut s = PlateauSchedule::new(0.5, 2, 0.0).unwrap();
        let mut lr: f64 = 1.0;
        lr = s.update(lr, 1.0);
        lr = s.update(lr, 1.0 - 1e-9);
        lr = s.update(lr, 1.0 - 2e-9);
        lr = s.update(lr, 1.0 - 3e-9);
        assert_eq!(lr, 0.5);
    }

    #[test]
    fn lr_never_drops_below_min() {
        let mut s = PlateauSchedule::new(0.1, 1, 1e-5).unwrap();
        let mut lr = 1e-4;
        lr = s.update(lr, 1.0);
        for _ in 0..20 {
            lr = s.update(lr, 1.0);
        }
        assert_eq!(lr, 1e-5);
    }

    #[test]
    fn invalid_construction_rejected() {
        assert!(PlateauSchedule::new(0.0, 5, 0.0).is_err());
        assert!(PlateauSchedule::new(1.0, 5, 0.0).is_err());
        assert!(PlateauSchedule::new(0.7, 0, 0.0).is_err());
    }
}
