//! Inductive conformal anomaly detection with a power martingale.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MartingaleConfig {
    /// power-martingale mixing parameter ε in (0, 1)
    pub epsilon: f64,
    /// alarm level on the linear scale
    pub threshold: f64,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        MartingaleConfig {
            epsilon: 0.92,
            threshold: 100.0,
        }
    }
}

/// Martingale state over a fixed calibration set. Updated functionally:
/// [`MartingaleState::step`] returns the next state and leaves `self` intact.
#[derive(Debug, Clone)]
pub struct MartingaleState {
    calibration: Arc<[f64]>,
    pub log_martingale: f64,
    pub config: MartingaleConfig,
    rng: ChaCha8Rng,
}

impl MartingaleState {
    /// `calibration` need not be sorted; `seed` drives tie-breaking draws.
    /// Returns `None` for an empty calibration set or ε outside (0, 1).
    pub fn new(mut calibration: Vec<f64>, config: MartingaleConfig, seed: u64) -> Option<Self> {
        if calibration.is_empty() || !(config.epsilon > 0.0 && config.epsilon < 1.0) || !(config.threshold > 0.0) {
            return None;
        }
        calibration.retain(|s| !s.is_nan());
        if calibration.is_empty() {
            return None;
        }
        calibration.sort_by(f64::total_cmp);
        Some(MartingaleState {
            calibration: calibration.into(),
            log_martingale: 0.0,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn calibration(&self) -> &[f64] {
        &self.calibration
    }

    /// Smoothed conformal p-value: (#{c > s} + θ·#{c = s} + 1) / (n + 1), θ ~ U(0, 1).
    pub fn p_value(&self, score: f64, theta: f64) -> f64 {
        let cal = &self.calibration;
        let below_or_eq = cal.partition_point(|&c| c <= score);
        let below = cal.partition_point(|&c| c < score);
        let greater = cal.len() - below_or_eq;
        let equal = below_or_eq - below;
        (greater as f64 + theta * equal as f64 + 1.0) / (cal.len() as f64 + 1.0)
    }

    pub fn alarm(&self) -> bool {
        self.log_martingale > self.config.threshold.ln()
    }

    /// Consumes one nonconformity score. Returns the next state, the alarm
    /// flag after the update, and the p-value used.
    pub fn step(&self, score: f64) -> (MartingaleState, bool, f64) {
        let mut next = self.clone();
        let theta: f64 = next.rng.gen();
        let p = self.p_value(score, theta);
        let eps = self.config.epsilon;
        next.log_martingale += eps.ln() + (eps - 1.0) * p.ln();
        let alarm = next.alarm();
        (next, alarm, p)
    }

    pub fn reset(&mut self) {
        self.log_martingale = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(n: usize) -> MartingaleState {
        MartingaleState::new((0..n).map(|i| i as f64).collect(), MartingaleConfig::default(), 1).unwrap()
    }

    #[test]
    fn low_score_shrinks_martingale() {
        let s = state(100);
        let (next, alarm, p) = s.step(-5.0);
        assert_eq!(p, 1.0);
        assert!((next.log_martingale - 0.92f64.ln()).abs() < 1e-15);
        assert!(!alarm);
    }

    #[test]
    fn extreme_scores_eventually_alarm() {
        let mut s = state(100);
        let mut prev = s.log_martingale;
        let mut fired = None;
        for i in 0..200 {
            let (next, alarm, p) = s.step(1e9);
            assert_eq!(p, 1.0 / 101.0);
            assert!(next.log_martingale > prev);
            prev = next.log_martingale;
            s = next;
            if alarm {
                fired = Some(i);
                break;
            }
        }
        assert!(fired.is_some());
    }

    #[test]
    fn p_values_in_unit_interval_with_ties() {
        let s = MartingaleState::new(vec![1.0, 1.0, 1.0, 2.0], MartingaleConfig::default(), 3).unwrap();
        for theta in [0.0, 0.3, 1.0] {
            let p = s.p_value(1.0, theta);
            assert!(p > 0.0 && p <= 1.0);
            assert!((p - (1.0 + 3.0 * theta + 1.0) / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn step_leaves_original_untouched() {
        let s = state(10);
        let _ = s.step(100.0);
        assert_eq!(s.log_martingale, 0.0);
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(MartingaleState::new(vec![], MartingaleConfig::default(), 1).is_none());
        let bad = MartingaleConfig { epsilon: 1.0, ..MartingaleConfig::default() };
        assert!(MartingaleState::new(vec![1.0], bad, 1).is_none());
    }
}
