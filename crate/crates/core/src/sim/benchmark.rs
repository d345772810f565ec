//! The default synthetic benchmark: four tracks, two controller surfaces,
//! environment models, and a generated driving history.

use crate::domain::{RoadType, SceneFeatures, Track};
use crate::envmodels::{EnvModels, IntermittentParams, TrafficModel, WeibullParams};
use crate::surrogate::{
    build_lut, synth_ground_truth, ControllerSurfaces, GroundTruthConfig, LutRecord, ResponseSurface, Surrogate,
    SurrogateError, DEFAULT_K,
};

use super::SimConfig;

/// Normalising speed for perf scores, m/s.
pub const V_MAX: f64 = 15.0;

fn seg(road: RoadType, len: f64) -> SceneFeatures {
    let (curvature, sign) = match road {
        RoadType::Intersection => (0.5, true),
        RoadType::Roundabout => (0.8, true),
        RoadType::LaneChange => (0.2, false),
        RoadType::Overpass => (0.05, false),
        _ => (0.0, false),
    };
    SceneFeatures::new(road, curvature, sign, len).expect("static benchmark scene")
}

/// Downtown, suburb with overpasses, freeway, and a tunnel into the city.
pub fn default_tracks() -> Vec<Track> {
    use RoadType::*;
    let build = |id: &str, layout: &[(RoadType, f64)]| {
        Track::new(id, layout.iter().map(|&(r, l)| seg(r, l)).collect()).expect("static benchmark track")
    };
    vec![
        build(
            "downtown",
            &[
                (MainRoad, 120.0),
                (Intersection, 40.0),
                (MainRoad, 110.0),
                (LaneChange, 60.0),
                (MainRoad, 130.0),
                (Intersection, 40.0),
                (MainRoad, 100.0),
                (Roundabout, 50.0),
                (MainRoad, 120.0),
                (Intersection, 40.0),
                (MainRoad, 140.0),
                (MainRoad, 110.0),
            ],
        ),
        build(
            "suburb",
            &[
                (MainRoad, 150.0),
                (Overpass, 180.0),
                (MainRoad, 140.0),
                (Intersection, 40.0),
                (MainRoad, 160.0),
                (Overpass, 200.0),
                (Freeway, 250.0),
                (LaneChange, 70.0),
                (MainRoad, 150.0),
                (Roundabout, 50.0),
                (MainRoad, 160.0),
            ],
        ),
        build(
            "freeway",
            &[
                (Freeway, 300.0),
                (Freeway, 280.0),
                (LaneChange, 80.0),
                (Freeway, 320.0),
                (Overpass, 200.0),
                (Freeway, 300.0),
                (LaneChange, 80.0),
                (Freeway, 260.0),
                (Freeway, 300.0),
                (MainRoad, 150.0),
            ],
        ),
        build(
            "tunnel_city",
            &[
                (Freeway, 250.0),
                (Tunnel, 200.0),
                (Tunnel, 220.0),
                (Tunnel, 180.0),
                (MainRoad, 120.0),
                (Intersection, 40.0),
                (MainRoad, 110.0),
                (Roundabout, 50.0),
                (MainRoad, 130.0),
                (LaneChange, 60.0),
                (MainRoad, 120.0),
                (Intersection, 40.0),
                (MainRoad, 100.0),
                (MainRoad, 120.0),
            ],
        ),
    ]
}

fn surface(speeds: [f64; 7], base: f64) -> ResponseSurface {
    let mut s = ResponseSurface::constant(1.0, base);
    for (road, v) in RoadType::ALL.into_iter().zip(speeds) {
        s.speed.insert(road, v);
    }
    s
}

/// Performant: fast, fragile under camera faults. Safety: half the
/// speed, nearly insensitive to faults.
pub fn default_surfaces() -> ControllerSurfaces {
    let order = RoadType::ALL;
    let perf_speed = |r: RoadType| match r {
        RoadType::MainRoad => 9.0,
        RoadType::Overpass => 10.0,
        RoadType::Freeway => 14.0,
        RoadType::Intersection => 6.0,
        RoadType::LaneChange => 8.0,
        RoadType::Roundabout => 6.0,
        RoadType::Tunnel => 10.0,
    };
    let mut perf = surface(order.map(perf_speed), 0.004);
    perf.weather_speed_drop = 0.15;
    perf.weather_collision = 0.03;
    perf.density_speed = [1.0, 0.9, 0.75];
    perf.density_collision = [0.0, 0.004, 0.01];
    perf.curvature_collision = 0.01;
    perf.sign_collision = 0.003;
    perf.degraded_speed_factor = 0.9;
    perf.degraded_collision = 0.25;

    let mut safe = surface(order.map(|r| 0.5 * perf_speed(r)), 0.002);
    safe.weather_speed_drop = 0.1;
    safe.weather_collision = 0.005;
    safe.density_speed = [1.0, 0.95, 0.85];
    safe.density_collision = [0.0, 0.001, 0.003];
    safe.curvature_collision = 0.002;
    safe.degraded_collision = 0.005;
    ControllerSurfaces {
        performant: perf,
        safety: safe,
    }
}

/// Weather drift, sticky traffic, and both failure processes configured.
/// The failure schedule of the [`SimConfig`] selects which one is active.
pub fn default_env() -> EnvModels {
    EnvModels {
        weather_delta: 10.0,
        traffic: TrafficModel::new([[0.8, 0.15, 0.05], [0.1, 0.8, 0.1], [0.05, 0.15, 0.8]])
            .expect("static traffic matrix"),
        permanent: Some(WeibullParams::new(2.0, 150.0).expect("static weibull")),
        intermittent: Some(IntermittentParams {
            base_rate: 0.012,
            growth: 1.0,
            tunnel_suppression: 0.2,
            mean_duration: 8.0,
        }),
        alarms: None,
        failure_component: 1,
    }
}

pub fn default_sim_config() -> SimConfig {
    SimConfig {
        env: default_env(),
        ..SimConfig::new(default_surfaces())
    }
}

/// Parameters of the generated driving history.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistoryConfig {
    pub records_per_scene: usize,
    pub failure_fraction: f64,
    pub speed_noise: f64,
    pub seed: u64,
    pub k: usize,
    pub v_max: f64,
}

impl Default for HistoryConfig {
    fn default() -> Self {
        HistoryConfig {
            records_per_scene: 150,
            failure_fraction: 0.4,
            speed_noise: 0.08,
            seed: 2024,
            k: DEFAULT_K,
            v_max: V_MAX,
        }
    }
}

/// Synthesises history on every distinct scene of `tracks`.
pub fn history(
    tracks: &[Track],
    surfaces: &ControllerSurfaces,
    n_cameras: usize,
    cfg: &HistoryConfig,
) -> Result<Vec<LutRecord>, SurrogateError> {
    let mut scenes: Vec<SceneFeatures> = Vec::new();
    for s in tracks.iter().flat_map(|t| t.segments.iter()) {
        if !scenes.iter().any(|x| x.label() == s.label()) {
            scenes.push(*s);
        }
    }
    synth_ground_truth(
        &GroundTruthConfig {
            surfaces: surfaces.clone(),
            scenes,
            records_per_scene: cfg.records_per_scene,
            failure_fraction: cfg.failure_fraction,
            speed_noise: cfg.speed_noise,
            n_cameras,
        },
        cfg.seed,
    )
}

pub fn surrogate_for(
    tracks: &[Track],
    surfaces: &ControllerSurfaces,
    n_cameras: usize,
    cfg: &HistoryConfig,
) -> Result<Surrogate, SurrogateError> {
    Surrogate::new(build_lut(history(tracks, surfaces, n_cameras, cfg)?)?, cfg.k, cfg.v_max)
}
