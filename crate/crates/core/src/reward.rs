//! Reward and scoring arithmetic shared by the selector, the planner, the
//! oracle, and the episode metrics.

use crate::domain::{Belief, DomainError, RewardWeights};

/// Switching penalty λᶜ: zero for the first switch, then `omega / m_s`
/// saturated at 1.
pub fn switch_cost(omega: u32, m_s: u32) -> Result<f64, DomainError> {
    if m_s == 0 {
        return Err(DomainError::ZeroMaxSwitches);
    }
    Ok(switch_cost_unchecked(omega, m_s))
}

fn switch_cost_unchecked(omega: u32, m_s: u32) -> f64 {
    if omega <= 1 {
        0.0
    } else {
        (f64::from(omega) / f64::from(m_s.max(1))).min(1.0)
    }
}

/// One-step reward used for forward switching: `α₁·λᵖ − α₂·λᶠ`.
pub fn forward_reward(belief: &Belief, weights: &RewardWeights) -> f64 {
    weights.alpha1 * belief.perf_score - weights.alpha2 * belief.safety_score
}

/// Reward used for reverse switching; adds the switching penalty `α₃·λᶜ(ω)`.
///
/// `omega` is the switch count of the state the reward is evaluated for; the
/// planner passes the count *after* the action has been applied.
pub fn reverse_reward(belief: &Belief, omega: u32, weights: &RewardWeights) -> f64 {
    debug_assert!(weights.m_s >= 1, "RewardWeights with m_s = 0");
    forward_reward(belief, weights) - weights.alpha3 * switch_cost_unchecked(omega, weights.m_s)
}

/// Infraction score `0.5·RC + 0.25·[no vehicle collision] + 0.25·[no object collision]`.
/// Higher is better; 1.0 is a clean, completed route.
pub fn infraction_score(
    route_completion: f64,
    vehicle_collision: bool,
    object_collision: bool,
) -> Result<f64, DomainError> {
    if !(0.0..=1.0).contains(&route_completion) {
        return Err(DomainError::UnitInterval {
            name: "route_completion",
            value: route_completion,
        });
    }
    let col_v = if vehicle_collision { 0.0 } else { 1.0 };
    let col_o = if object_collision { 0.0 } else { 1.0 };
    Ok(0.5 * route_completion + 0.25 * col_v + 0.25 * col_o)
}
