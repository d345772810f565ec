//! State, scene, and belief types for the controller-switching SMDP.
//!
//! Everything here is a plain value type. The only behaviour is validation
//! and a few derived quantities (normalized weather, degraded perception).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("segment length must be > 0, got {0}")]
    SegmentLength(f64),
    #[error("curvature must be >= 0, got {0}")]
    Curvature(f64),
    #[error("track `{0}` has no segments")]
    EmptyTrack(String),
    #[error("m_s must be >= 1")]
    ZeroMaxSwitches,
    #[error("reward weight {name} must be a finite non-negative number, got {value}")]
    Weight { name: &'static str, value: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    UnitInterval { name: &'static str, value: f64 },
    #[error("speed must be a finite non-negative number, got {0}")]
    Speed(f64),
    #[error("unknown {kind} `{value}`")]
    Unknown { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoadType {
    MainRoad,
    Overpass,
    Freeway,
    Intersection,
    LaneChange,
    Roundabout,
    Tunnel,
}

impl RoadType {
    pub const ALL: [RoadType; 7] = [
        RoadType::MainRoad,
        RoadType::Overpass,
        RoadType::Freeway,
        RoadType::Intersection,
        RoadType::LaneChange,
        RoadType::Roundabout,
        RoadType::Tunnel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoadType::MainRoad => "MainRoad",
            RoadType::Overpass => "Overpass",
            RoadType::Freeway => "Freeway",
            RoadType::Intersection => "Intersection",
            RoadType::LaneChange => "LaneChange",
            RoadType::Roundabout => "Roundabout",
            RoadType::Tunnel => "Tunnel",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RoadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoadType {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoadType::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| DomainError::Unknown {
                kind: "road type",
                value: s.to_owned(),
            })
    }
}

/// Structural (a-priori) features of one stretch of road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFeatures {
    pub road_type: RoadType,
    #[serde(default)]
    pub curvature: f64,
    #[serde(default)]
    pub has_traffic_sign: bool,
    pub segment_length: f64,
}

impl SceneFeatures {
    pub fn new(
        road_type: RoadType,
        curvature: f64,
        has_traffic_sign: bool,
        segment_length: f64,
    ) -> Result<Self, DomainError> {
        let scene = SceneFeatures {
            road_type,
            curvature,
            has_traffic_sign,
            segment_length,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.segment_length > 0.0) || !self.segment_length.is_finite() {
            return Err(DomainError::SegmentLength(self.segment_length));
        }
        if !(self.curvature >= 0.0) || !self.curvature.is_finite() {
            return Err(DomainError::Curvature(self.curvature));
        }
        Ok(())
    }

    pub fn label(&self) -> StructuralLabel {
        StructuralLabel::of(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CurvatureBucket {
    /// curvature == 0
    Straight,
    /// (0, 0.1]
    Gentle,
    /// > 0.1
    Sharp,
}

impl CurvatureBucket {
    pub fn of(curvature: f64) -> Self {
        if curvature <= 0.0 {
            CurvatureBucket::Straight
        } else if curvature <= 0.1 {
            CurvatureBucket::Gentle
        } else {
            CurvatureBucket::Sharp
        }
    }

    fn code(self) -> u8 {
        match self {
            CurvatureBucket::Straight => 0,
            CurvatureBucket::Gentle => 1,
            CurvatureBucket::Sharp => 2,
        }
    }
}

/// Discrete cluster key derived from [`SceneFeatures`].
///
/// Text form is `<RoadType>-c<bucket>-s<sign>`, e.g. `Freeway-c1-s0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructuralLabel {
    pub road_type: RoadType,
    pub curvature: CurvatureBucket,
    pub has_traffic_sign: bool,
}

impl StructuralLabel {
    pub fn of(scene: &SceneFeatures) -> Self {
        StructuralLabel {
            road_type: scene.road_type,
            curvature: CurvatureBucket::of(scene.curvature),
            has_traffic_sign: scene.has_traffic_sign,
        }
    }
}

impl fmt::Display for StructuralLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-c{}-s{}",
            self.road_type,
            self.curvature.code(),
            u8::from(self.has_traffic_sign)
        )
    }
}

impl FromStr for StructuralLabel {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::Unknown {
            kind: "structural label",
            value: s.to_owned(),
        };
        let mut parts = s.split('-');
        let road_type = parts.next().ok_or_else(bad)?.parse()?;
        let curvature = match parts.next() {
            Some("c0") => CurvatureBucket::Straight,
            Some("c1") => CurvatureBucket::Gentle,
            Some("c2") => CurvatureBucket::Sharp,
            _ => return Err(bad()),
        };
        let has_traffic_sign = match parts.next() {
            Some("s0") => false,
            Some("s1") => true,
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(StructuralLabel {
            road_type,
            curvature,
            has_traffic_sign,
        })
    }
}

/// Temporal scene features, each channel a percentage in [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weather {
    pub cloudiness: f64,
    pub precipitation: f64,
    pub precipitation_deposit: f64,
}

impl Weather {
    /// Builds a weather value, clamping every channel into [0, 100].
    pub fn new(cloudiness: f64, precipitation: f64, precipitation_deposit: f64) -> Self {
        Weather {
            cloudiness: clamp_pct(cloudiness),
            precipitation: clamp_pct(precipitation),
            precipitation_deposit: clamp_pct(precipitation_deposit),
        }
    }

    pub fn channels(&self) -> [f64; 3] {
        [self.cloudiness, self.precipitation, self.precipitation_deposit]
    }

    pub fn from_channels(c: [f64; 3]) -> Self {
        Weather::new(c[0], c[1], c[2])
    }

    pub fn normalized(&self) -> [f64; 3] {
        self.channels().map(|c| c / 100.0)
    }

    /// Scalar in [0, 1] describing how adverse the weather is for driving.
    /// Rain dominates, standing water next, cloud cover least.
    pub fn adversity(&self) -> f64 {
        (0.5 * self.precipitation + 0.3 * self.precipitation_deposit + 0.2 * self.cloudiness) / 100.0
    }
}

impl Default for Weather {
    fn default() -> Self {
        Weather::new(0.0, 0.0, 0.0)
    }
}

fn clamp_pct(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Track {
    pub id: String,
    pub segments: Vec<SceneFeatures>,
}

impl Track {
    pub fn new(id: impl Into<String>, segments: Vec<SceneFeatures>) -> Result<Self, DomainError> {
        let track = Track {
            id: id.into(),
            segments,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.segments.is_empty() {
            return Err(DomainError::EmptyTrack(self.id.clone()));
        }
        self.segments.iter().try_for_each(SceneFeatures::validate)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.segment_length).sum()
    }

    /// Scene at `index`, clamped to the last segment for finished states.
    pub fn scene(&self, index: usize) -> &SceneFeatures {
        &self.segments[index.min(self.segments.len() - 1)]
    }

    pub fn distance_before(&self, index: usize) -> f64 {
        self.segments[..index.min(self.segments.len())]
            .iter()
            .map(|s| s.segment_length)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficDensity {
    Low,
    Medium,
    High,
}

impl TrafficDensity {
    pub const ALL: [TrafficDensity; 3] = [TrafficDensity::Low, TrafficDensity::Medium, TrafficDensity::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficDensity::Low => "low",
            TrafficDensity::Medium => "medium",
            TrafficDensity::High => "high",
        }
    }
}

impl FromStr for TrafficDensity {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrafficDensity::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| DomainError::Unknown {
                kind: "traffic density",
                value: s.to_owned(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerId {
    Performant,
    Safety,
}

impl ControllerId {
    pub fn other(self) -> Self {
        match self {
            ControllerId::Performant => ControllerId::Safety,
            ControllerId::Safety => ControllerId::Performant,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerId::Performant => "performant",
            ControllerId::Safety => "safety",
        }
    }
}

impl fmt::Display for ControllerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerId {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "performant" => Ok(ControllerId::Performant),
            "safety" => Ok(ControllerId::Safety),
            _ => Err(DomainError::Unknown {
                kind: "controller",
                value: s.to_owned(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MonitorState {
    pub ood_alarm: bool,
    pub occlusion_flags: Vec<bool>,
}

/// The SMDP state at one instant.
///
/// `segment_offset` (meters already driven inside the current segment) and
/// `clock` are carried alongside the tuple so that arrival times at the next
/// scene can be computed and events raced in continuous time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub v: f64,
    pub segment_index: usize,
    pub segment_offset: f64,
    pub weather: Weather,
    pub traffic_density: TrafficDensity,
    pub controller: ControllerId,
    pub failures: Vec<bool>,
    pub monitor: MonitorState,
    pub switch_count: u32,
    pub clock: f64,
}

impl SystemState {
    pub fn new(n_components: usize, controller: ControllerId) -> Self {
        SystemState {
            v: 0.0,
            segment_index: 0,
            segment_offset: 0.0,
            weather: Weather::default(),
            traffic_density: TrafficDensity::Low,
            controller,
            failures: vec![false; n_components],
            monitor: MonitorState {
                ood_alarm: false,
                occlusion_flags: vec![false; n_components],
            },
            switch_count: 0,
            clock: 0.0,
        }
    }

    pub fn any_failure(&self) -> bool {
        self.failures.iter().any(|&f| f)
    }

    /// Perception is degraded when a component has failed or the OOD monitor
    /// is raising an alarm. This selects the failure partition of the lookup table.
    pub fn degraded(&self) -> bool {
        self.any_failure() || self.monitor.ood_alarm
    }

    pub fn failure_bits(&self) -> u8 {
        bits_of(&self.failures)
    }
}

pub(crate) fn bits_of(flags: &[bool]) -> u8 {
    flags
        .iter()
        .take(8)
        .enumerate()
        .fold(0u8, |acc, (i, &f)| acc | (u8::from(f) << i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    KeepCurrent,
    SwitchController,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::KeepCurrent, Action::SwitchController];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Controller that drives after taking this action from `current`.
    pub fn target(self, current: ControllerId) -> ControllerId {
        match self {
            Action::KeepCurrent => current,
            Action::SwitchController => current.other(),
        }
    }

    pub fn is_switch(self) -> bool {
        self == Action::SwitchController
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub m_s: u32,
}

impl RewardWeights {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64, m_s: u32) -> Result<Self, DomainError> {
        let w = RewardWeights {
            alpha1,
            alpha2,
            alpha3,
            m_s,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for (name, value) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("alpha3", self.alpha3)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(DomainError::Weight { name, value });
            }
        }
        if self.m_s == 0 {
            return Err(DomainError::ZeroMaxSwitches);
        }
        Ok(())
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 0.5,
            m_s: 6,
        }
    }
}

/// Aggregated historical estimate for one controller in one situation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    /// Normalized average speed.
    pub perf_score: f64,
    /// Collision likelihood.
    pub safety_score: f64,
    pub raw_speed: f64,
}

impl Belief {
    pub fn new(perf_score: f64, safety_score: f64, raw_speed: f64) -> Result<Self, DomainError> {
        if !(0.0..=1.0).contains(&perf_score) {
            return Err(DomainError::UnitInterval {
                name: "perf_score",
                value: perf_score,
            });
        }
        if !(0.0..=1.0).contains(&safety_score) {
            return Err(DomainError::UnitInterval {
                name: "safety_score",
                value: safety_score,
            });
        }
        if !(raw_speed >= 0.0) || !raw_speed.is_finite() {
            return Err(DomainError::Speed(raw_speed));
        }
        Ok(Belief {
            perf_score,
            safety_score,
            raw_speed,
        })
    }

    /// Builds a belief from a raw speed, normalizing by `v_max` and clamping to [0, 1].
    pub fn from_speed(raw_speed: f64, collision_rate: f64, v_max: f64) -> Self {
        Belief {
            perf_score: (raw_speed / v_max).clamp(0.0, 1.0),
            safety_score: collision_rate.clamp(0.0, 1.0),
            raw_speed: raw_speed.max(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weather_channels_clamp() {
        let w = Weather::new(-5.0, 140.0, f64::NAN);
        assert_eq!(w.channels(), [0.0, 100.0, 0.0]);
    }

    #[test]
    fn scene_rejects_bad_geometry() {
        assert!(SceneFeatures::new(RoadType::Freeway, 0.0, false, 0.0).is_err());
        assert!(SceneFeatures::new(RoadType::Freeway, -0.1, false, 10.0).is_err());
        assert!(SceneFeatures::new(RoadType::Freeway, 0.0, false, 10.0).is_ok());
    }

    #[test]
    fn empty_track_rejected() {
        assert_eq!(
            Track::new("t", vec![]).unwrap_err(),
            DomainError::EmptyTrack("t".into())
        );
    }

    #[test]
    fn label_round_trips_through_text() {
        for road in RoadType::ALL {
            for (curv, sign) in [(0.0, false), (0.05, true), (0.3, false)] {
                let scene = SceneFeatures::new(road, curv, sign, 50.0).unwrap();
                let label = scene.label();
                assert_eq!(label.to_string().parse::<StructuralLabel>().unwrap(), label);
            }
        }
        assert!("Freeway-c3-s0".parse::<StructuralLabel>().is_err());
    }

    #[test]
    fn curvature_buckets() {
        assert_eq!(CurvatureBucket::of(0.0), CurvatureBucket::Straight);
        assert_eq!(CurvatureBucket::of(0.1), CurvatureBucket::Gentle);
        assert_eq!(CurvatureBucket::of(0.1000001), CurvatureBucket::Sharp);
    }

    #[test]
    fn weights_reject_zero_m_s() {
        assert_eq!(RewardWeights::new(1.0, 1.0, 0.5, 0), Err(DomainError::ZeroMaxSwitches));
        assert!(RewardWeights::new(-1.0, 1.0, 0.5, 6).is_err());
    }

    #[test]
    fn action_target_flips_only_on_switch() {
        assert_eq!(Action::KeepCurrent.target(ControllerId::Safety), ControllerId::Safety);
        assert_eq!(
            Action::SwitchController.target(ControllerId::Safety),
            ControllerId::Performant
        );
    }

    #[test]
    fn degraded_tracks_failures_and_alarm() {
        let mut s = SystemState::new(3, ControllerId::Performant);
        assert!(!s.degraded());
        s.monitor.ood_alarm = true;
        assert!(s.degraded());
        s.monitor.ood_alarm = false;
        s.failures[1] = true;
        assert!(s.degraded());
        assert_eq!(s.failure_bits(), 0b010);
    }
}
