//! The driving SMDP as a planning model: continuous-time event race between
//! scene arrival, sensor failure, monitor alarm, and the periodic weather query.

use rand::Rng;

use super::{MctsConfig, PlanError, PlanningModel};
use crate::domain::{bits_of, Action, ControllerId, RewardWeights, SystemState, Track};
use crate::envmodels::{intermittent_failure_rate, sample_exponential, step_weather, EnvModels};
use crate::reward::reverse_reward;
use crate::surrogate::Surrogate;

/// Which event won the race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Failure,
    Monitor,
    Spatial,
    SpatialTemporal,
    Temporal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: SystemState,
    pub elapsed: f64,
    pub t_q: f64,
    pub branch: Branch,
}

/// Samples the next decision epoch after taking `action` in `state`.
///
/// A switch flips the controller and increments ω before anything is
/// sampled, so the new controller's speed drives the race.
#[allow(clippy::too_many_arguments)]
pub fn advance_time<R: Rng + ?Sized>(
    state: &SystemState,
    t_q: f64,
    action: Action,
    track: &Track,
    surrogate: &Surrogate,
    env: &EnvModels,
    cfg: &MctsConfig,
    rng: &mut R,
) -> Result<Step, PlanError> {
    let mut s = state.clone();
    if action.is_switch() {
        s.controller = s.controller.other();
        s.switch_count += 1;
    }
    let scene = track.scene(s.segment_index);
    let belief = surrogate
        .belief(&s, scene, s.controller)
        .map_err(|e| PlanError::Model(e.to_string()))?;
    let v_hat = if belief.raw_speed > 0.0 {
        belief.raw_speed
    } else {
        log::warn!(
            "surrogate predicted v = {} on segment {}; using v_min = {}",
            belief.raw_speed,
            s.segment_index,
            cfg.v_min
        );
        cfg.v_min
    };

    let t_o = match &env.alarms {
        Some(model) => {
            let p = model
                .params_for(&s.weather, scene, s.traffic_density)
                .map_err(|e| PlanError::Model(e.to_string()))?;
            // an active alarm races its remaining duration, an idle monitor its next arrival
            let mean = if s.monitor.ood_alarm {
                p.mean_duration
            } else {
                p.mean_interarrival
            };
            sample_exponential(mean, rng)
        }
        None => f64::INFINITY,
    };
    let t_e = (scene.segment_length - s.segment_offset).max(0.0) / v_hat;
    let window = t_e.min(t_o).min(t_q);
    let t_f = sample_failure(&s, env, scene, window, rng);

    let eps = cfg.time_epsilon;
    let (branch, elapsed) = if let Some(t_f) = t_f {
        (Branch::Failure, t_f)
    } else if t_o < t_e && t_o < t_q {
        (Branch::Monitor, t_o)
    } else if t_e < t_q - eps {
        (Branch::Spatial, t_e)
    } else if (t_e - t_q).abs() <= eps {
        (Branch::SpatialTemporal, t_q)
    } else {
        (Branch::Temporal, t_q)
    };

    s.v = v_hat;
    s.clock += elapsed;
    let new_t_q = match branch {
        Branch::Failure | Branch::Monitor | Branch::Spatial => t_q - elapsed,
        Branch::SpatialTemporal | Branch::Temporal => cfg.tau_q,
    };
    match branch {
        Branch::Failure => {
            let c = env.failure_component.min(s.failures.len().saturating_sub(1));
            if let Some(f) = s.failures.get_mut(c) {
                *f = !*f;
            }
            s.segment_offset += v_hat * elapsed;
        }
        Branch::Monitor => {
            s.monitor.ood_alarm = !s.monitor.ood_alarm;
            s.segment_offset += v_hat * elapsed;
        }
        Branch::Spatial | Branch::SpatialTemporal => {
            s.segment_index += 1;
            s.segment_offset = 0.0;
        }
        Branch::Temporal => {
            s.segment_offset = (s.segment_offset + v_hat * elapsed).min(scene.segment_length);
        }
    }
    if matches!(branch, Branch::SpatialTemporal | Branch::Temporal) {
        s.weather = step_weather(&s.weather, env.weather_delta, rng);
    }
    s.traffic_density = env.traffic.step(s.traffic_density, rng);
    Ok(Step {
        state: s,
        elapsed,
        t_q: new_t_q,
        branch,
    })
}

/// Time of the next change of the modelled component within `window`, if any.
/// A healthy component races Weibull wear-out (conditioned on its age) against
/// transient occlusion onset; an occluded one races its recovery.
fn sample_failure<R: Rng + ?Sized>(
    s: &SystemState,
    env: &EnvModels,
    scene: &crate::domain::SceneFeatures,
    window: f64,
    rng: &mut R,
) -> Option<f64> {
    let c = env.failure_component;
    let failed = s.failures.get(c).copied()?;
    let t = if failed {
        env.intermittent
            .map(|p| sample_exponential(p.mean_duration, rng))
            .unwrap_or(f64::INFINITY)
    } else {
        let wear = env
            .permanent
            .map(|p| p.sample_residual(s.clock, rng))
            .unwrap_or(f64::INFINITY);
        let onset = env
            .intermittent
            .map(|p| {
                let rate = intermittent_failure_rate(&s.weather, scene, &p);
                if rate > 0.0 {
                    sample_exponential(1.0 / rate, rng)
                } else {
                    f64::INFINITY
                }
            })
            .unwrap_or(f64::INFINITY);
        wear.min(onset)
    };
    (t <= window).then_some(t)
}

/// A node state of the driving SMDP.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub sys: SystemState,
    /// seconds until the next weather query
    pub t_q: f64,
    pub root_segment: usize,
    pub depth: usize,
}

/// Chance-node key: which event fired and the discretized resulting state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutcomeKey {
    pub segment: usize,
    pub weather: [i32; 3],
    pub density: u8,
    pub failures: u8,
    pub ood: bool,
    pub controller: ControllerId,
    pub omega: u32,
}

/// Weather grid used to bucket chance outcomes, percent.
pub const WEATHER_GRID: f64 = 5.0;

pub struct SmdpModel<'a> {
    pub track: &'a Track,
    pub surrogate: &'a Surrogate,
    pub env: &'a EnvModels,
    pub weights: RewardWeights,
    pub cfg: MctsConfig,
}

impl<'a> SmdpModel<'a> {
    pub fn root(&self, sys: SystemState, t_q: f64) -> PlanState {
        PlanState {
            root_segment: sys.segment_index,
            sys,
            t_q: t_q.clamp(f64::MIN_POSITIVE, self.cfg.tau_q),
            depth: 0,
        }
    }

    /// Plans the reverse switch from a state driven by the safety controller.
    pub fn plan_reverse_switch<R: Rng + ?Sized>(
        &self,
        sys: &SystemState,
        t_q: f64,
        rng: &mut R,
        interrupt: &super::Interrupt,
    ) -> Result<super::PlanOutcome<PlanState, OutcomeKey>, PlanError> {
        if sys.controller != ControllerId::Safety {
            return Err(PlanError::NotSafety);
        }
        super::mcts_plan(self, self.root(sys.clone(), t_q), &self.cfg, rng, interrupt)
    }
}

impl PlanningModel for SmdpModel<'_> {
    type State = PlanState;
    type Key = OutcomeKey;

    fn reward(&self, state: &PlanState, action: Action) -> Result<f64, PlanError> {
        let mut s = state.sys.clone();
        if action.is_switch() {
            s.controller = s.controller.other();
            s.switch_count += 1;
        }
        let belief = self
            .surrogate
            .belief(&s, self.track.scene(s.segment_index), s.controller)
            .map_err(|e| PlanError::Model(e.to_string()))?;
        Ok(reverse_reward(&belief, s.switch_count, &self.weights))
    }

    fn is_terminal(&self, state: &PlanState) -> bool {
        state.sys.segment_index >= self.track.len()
            || state.sys.segment_index >= state.root_segment + self.cfg.horizon_scenes
            || state.depth >= self.cfg.max_depth
    }

    fn step<R: Rng + ?Sized>(&self, state: &PlanState, action: Action, rng: &mut R) -> Result<PlanState, PlanError> {
        let step = advance_time(
            &state.sys,
            state.t_q,
            action,
            self.track,
            self.surrogate,
            self.env,
            &self.cfg,
            rng,
        )?;
        Ok(PlanState {
            sys: step.state,
            t_q: step.t_q,
            root_segment: state.root_segment,
            depth: state.depth + 1,
        })
    }

    fn outcome_key(&self, state: &PlanState) -> OutcomeKey {
        let s = &state.sys;
        OutcomeKey {
            segment: s.segment_index,
            weather: s.weather.channels().map(|c| (c / WEATHER_GRID).round() as i32),
            density: s.traffic_density.index() as u8,
            failures: bits_of(&s.failures),
            ood: s.monitor.ood_alarm,
            controller: s.controller,
            omega: s.switch_count,
        }
    }
}
