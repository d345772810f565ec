//! Discrete-event episode simulator.
//!
//! The vehicle drives a track under the active controller's ground-truth
//! surface. Segment ends, weather queries, failures, monitor alarms, decision
//! completions and transition completions are exact events; between events
//! distance is integrated in closed form under a constant-acceleration ramp.

pub mod benchmark;
mod episode;
mod processes;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ControllerId, RewardWeights, RoadType, TrafficDensity, Weather};
use crate::envmodels::EnvModels;
use crate::monitors::OcclusionConfig;
use crate::planner::MctsConfig;
use crate::surrogate::ControllerSurfaces;
use crate::switcher::{DecisionRecord, LatencyModel, Strategy, SwitchConfig, TransitionRecord};

pub use episode::{run_episode, run_episode_logged};
pub use processes::{inject_failure, AlarmProcess, FailureInterval, FailureProcess};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no collision probability for {0} (got {1})")]
    MissingCell(RoadType, f64),
    #[error("environment model: {0}")]
    Env(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureSchedule {
    None,
    PermanentAtRandom,
    Intermittent,
}

impl FailureSchedule {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureSchedule::None => "none",
            FailureSchedule::PermanentAtRandom => "permanent_at_random",
            FailureSchedule::Intermittent => "intermittent",
        }
    }

    /// The environment models with only this schedule's failure process enabled.
    pub fn restrict(self, env: &EnvModels) -> EnvModels {
        let mut e = env.clone();
        if self != FailureSchedule::PermanentAtRandom {
            e.permanent = None;
        }
        if self != FailureSchedule::Intermittent {
            e.intermittent = None;
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub surfaces: ControllerSurfaces,
    #[serde(default)]
    pub env: EnvModels,
    #[serde(default)]
    pub weights: RewardWeights,
    #[serde(default)]
    pub mcts: MctsConfig,
    /// derived from the safety surface when absent
    #[serde(default)]
    pub switch: Option<SwitchConfig>,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default = "default_schedule")]
    pub failure_schedule: FailureSchedule,
    #[serde(default = "default_cameras")]
    pub n_cameras: usize,
    /// share of collisions that involve another vehicle
    #[serde(default = "half")]
    pub vehicle_collision_share: f64,
    /// m/s² for both acceleration and braking
    #[serde(default = "default_accel")]
    pub acceleration: f64,
    /// step used while a gated transition is re-evaluated, seconds
    #[serde(default = "default_tick")]
    pub tick: f64,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default)]
    pub occlusion: OcclusionConfig,
    /// rendered camera frame size for the occlusion detector
    #[serde(default = "default_frame")]
    pub frame_size: (usize, usize),
}

fn default_schedule() -> FailureSchedule {
    FailureSchedule::None
}
fn default_cameras() -> usize {
    3
}
fn half() -> f64 {
    0.5
}
fn default_accel() -> f64 {
    3.0
}
fn default_tick() -> f64 {
    0.1
}
fn default_max_time() -> f64 {
    3600.0
}
fn default_frame() -> (usize, usize) {
    (64, 48)
}

impl SimConfig {
    pub fn new(surfaces: ControllerSurfaces) -> Self {
        SimConfig {
            surfaces,
            env: EnvModels::default(),
            weights: RewardWeights::default(),
            mcts: MctsConfig::default(),
            switch: None,
            latency: LatencyModel::default(),
            failure_schedule: default_schedule(),
            n_cameras: default_cameras(),
            vehicle_collision_share: half(),
            acceleration: default_accel(),
            tick: default_tick(),
            max_time: default_max_time(),
            occlusion: OcclusionConfig::default(),
            frame_size: default_frame(),
        }
    }

    /// Mean safety cruise speed over road types.
    pub fn safety_cruise_speed(&self) -> f64 {
        let s = &self.surfaces.safety.speed;
        s.values().sum::<f64>() / s.len().max(1) as f64
    }

    pub fn switch_config(&self) -> SwitchConfig {
        self.switch
            .clone()
            .unwrap_or_else(|| SwitchConfig::for_safety_cruise(self.safety_cruise_speed()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = |e: String| SimError::Config(e);
        self.surfaces.validate().map_err(|e| cfg(e.to_string()))?;
        self.env.validate().map_err(|e| cfg(e.to_string()))?;
        self.weights.validate().map_err(|e| cfg(e.to_string()))?;
        self.mcts.validate().map_err(|e| cfg(e.to_string()))?;
        self.switch_config().validate().map_err(|e| cfg(e.to_string()))?;
        if self.n_cameras == 0 || self.env.failure_component >= self.n_cameras {
            return Err(cfg(format!(
                "failure_component {} needs n_cameras > it (got {})",
                self.env.failure_component, self.n_cameras
            )));
        }
        if !(0.0..=1.0).contains(&self.vehicle_collision_share) {
            return Err(cfg("vehicle_collision_share outside [0, 1]".into()));
        }
        for (name, v) in [("acceleration", self.acceleration), ("tick", self.tick), ("max_time", self.max_time)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(cfg(format!("{name} must be positive")));
            }
        }
        if self.frame_size.0 == 0 || self.frame_size.1 == 0 {
            return Err(cfg("frame_size must be non-zero".into()));
        }
        match self.failure_schedule {
            FailureSchedule::PermanentAtRandom if self.env.permanent.is_none() => {
                Err(cfg("permanent_at_random schedule needs env.permanent".into()))
            }
            FailureSchedule::Intermittent if self.env.intermittent.is_none() => {
                Err(cfg("intermittent schedule needs env.intermittent".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollisionOutcome {
    None,
    Vehicle,
    Object,
}

/// One Bernoulli draw per segment traversal; a hit is split between vehicle
/// and object collisions by `vehicle_share`.
pub fn collision_trial<R: Rng + ?Sized>(
    probability: f64,
    vehicle_share: f64,
    road: RoadType,
    rng: &mut R,
) -> Result<CollisionOutcome, SimError> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(SimError::MissingCell(road, probability));
    }
    let hit: f64 = rng.gen();
    if hit >= probability {
        return Ok(CollisionOutcome::None);
    }
    let kind: f64 = rng.gen();
    Ok(if kind < vehicle_share {
        CollisionOutcome::Vehicle
    } else {
        CollisionOutcome::Object
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentLog {
    pub index: usize,
    pub road_type: RoadType,
    pub entered_at: f64,
    pub exited_at: f64,
    /// time-weighted mean collision probability over the traversal
    pub collision_probability: f64,
    pub controller_at_exit: ControllerId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub strategy: Strategy,
    pub track: String,
    pub seed: u64,
    pub travel_time: f64,
    pub route_completion: f64,
    pub vehicle_collision: bool,
    pub object_collision: bool,
    pub switch_count: u32,
    pub reverse_switches: u32,
    pub infraction: f64,
    pub decision_latencies: Vec<f64>,
    pub timed_out: bool,
    pub segments: Vec<SegmentLog>,
}

impl EpisodeMetrics {
    pub fn mean_decision_latency_ms(&self) -> f64 {
        if self.decision_latencies.is_empty() {
            0.0
        } else {
            1000.0 * self.decision_latencies.iter().sum::<f64>() / self.decision_latencies.len() as f64
        }
    }
}

/// One line of the per-episode JSON-lines event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Start { t: f64, weather: Weather, density: TrafficDensity, controller: ControllerId },
    SegmentEnter { t: f64, segment: usize, road: RoadType },
    WeatherQuery { t: f64, weather: Weather },
    Traffic { t: f64, density: TrafficDensity },
    FailureOnset { t: f64, component: usize, observed: bool },
    FailureClear { t: f64, component: usize, observed: bool },
    AlarmOn { t: f64 },
    AlarmOff { t: f64 },
    Decision(DecisionRecord),
    Transition(TransitionRecord),
    ControllerFlip { t: f64, to: ControllerId, omega: u32 },
    Collision { t: f64, segment: usize, kind: CollisionOutcome },
    Finish { t: f64, route_completion: f64, timed_out: bool },
}

impl LogEvent {
    pub fn time(&self) -> f64 {
        match self {
            LogEvent::Start { t, .. }
            | LogEvent::SegmentEnter { t, .. }
            | LogEvent::WeatherQuery { t, .. }
            | LogEvent::Traffic { t, .. }
            | LogEvent::FailureOnset { t, .. }
            | LogEvent::FailureClear { t, .. }
            | LogEvent::AlarmOn { t }
            | LogEvent::AlarmOff { t }
            | LogEvent::ControllerFlip { t, .. }
            | LogEvent::Collision { t, .. }
            | LogEvent::Finish { t, .. } => *t,
            LogEvent::Decision(d) => d.decided_at,
            LogEvent::Transition(r) => r.ended_at,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub metrics: EpisodeMetrics,
    pub events: Vec<LogEvent>,
    pub decisions: Vec<DecisionRecord>,
    pub transitions: Vec<TransitionRecord>,
}

impl EpisodeRecord {
    pub fn write_jsonl<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
