//! Ground-truth controller behaviour surfaces and the synthetic history
//! generator that fills the lookup table.
//!
//! The simulator drives with the same surfaces, so beliefs read from the
//! table are consistent estimates of what the simulator will do.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LutRecord, SurrogateError};
use crate::domain::{ControllerId, RoadType, SceneFeatures, TrafficDensity, Weather};

/// Speed and per-segment collision probability of one controller as a
/// function of road, weather, traffic, and perception health.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSurface {
    /// cruise speed per road type, m/s
    pub speed: BTreeMap<RoadType, f64>,
    /// base collision probability per segment traversal, per road type
    pub collision: BTreeMap<RoadType, f64>,
    /// fraction of speed lost at weather adversity 1
    #[serde(default)]
    pub weather_speed_drop: f64,
    /// probability added at weather adversity 1 (scaled by adversity²)
    #[serde(default)]
    pub weather_collision: f64,
    #[serde(default = "unit3")]
    pub density_speed: [f64; 3],
    #[serde(default)]
    pub density_collision: [f64; 3],
    /// probability added per unit of curvature
    #[serde(default)]
    pub curvature_collision: f64,
    #[serde(default)]
    pub sign_collision: f64,
    #[serde(default = "one")]
    pub degraded_speed_factor: f64,
    /// probability added while perception is degraded
    #[serde(default)]
    pub degraded_collision: f64,
}

fn unit3() -> [f64; 3] {
    [1.0; 3]
}

fn one() -> f64 {
    1.0
}

impl ResponseSurface {
    /// Constant surface: the same speed and collision probability everywhere.
    pub fn constant(speed: f64, collision: f64) -> Self {
        ResponseSurface {
            speed: RoadType::ALL.into_iter().map(|r| (r, speed)).collect(),
            collision: RoadType::ALL.into_iter().map(|r| (r, collision)).collect(),
            weather_speed_drop: 0.0,
            weather_collision: 0.0,
            density_speed: [1.0; 3],
            density_collision: [0.0; 3],
            curvature_collision: 0.0,
            sign_collision: 0.0,
            degraded_speed_factor: 1.0,
            degraded_collision: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        for road in RoadType::ALL {
            let v = self.speed.get(&road).copied().ok_or(SurrogateError::SurfaceGap(road))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(SurrogateError::SurfaceSpeed(v));
            }
            let p = self.collision.get(&road).copied().ok_or(SurrogateError::SurfaceGap(road))?;
            check_prob(p)?;
        }
        for p in self.density_collision {
            check_prob(p)?;
        }
        check_prob(self.weather_collision)?;
        check_prob(self.degraded_collision)?;
        check_prob(self.sign_collision)?;
        if !(self.curvature_collision >= 0.0) {
            return Err(SurrogateError::Probability(self.curvature_collision));
        }
        if !(0.0..1.0).contains(&self.weather_speed_drop) {
            return Err(SurrogateError::SurfaceSpeed(self.weather_speed_drop));
        }
        for f in self.density_speed.into_iter().chain([self.degraded_speed_factor]) {
            if !(f > 0.0) || !f.is_finite() {
                return Err(SurrogateError::SurfaceSpeed(f));
            }
        }
        Ok(())
    }

    pub fn speed(&self, scene: &SceneFeatures, weather: &Weather, density: TrafficDensity, degraded: bool) -> f64 {
        let base = self.speed.get(&scene.road_type).copied().unwrap_or(1.0);
        let degraded = if degraded { self.degraded_speed_factor } else { 1.0 };
        base * (1.0 - self.weather_speed_drop * weather.adversity()) * self.density_speed[density.index()] * degraded
    }

    pub fn collision_probability(
        &self,
        scene: &SceneFeatures,
        weather: &Weather,
        density: TrafficDensity,
        degraded: bool,
    ) -> f64 {
        let adversity = weather.adversity();
        let p = self.collision.get(&scene.road_type).copied().unwrap_or(0.0)
            + self.weather_collision * adversity * adversity
            + self.density_collision[density.index()]
            + self.curvature_collision * scene.curvature
            + if scene.has_traffic_sign { self.sign_collision } else { 0.0 }
            + if degraded { self.degraded_collision } else { 0.0 };
        p.clamp(0.0, 1.0)
    }
}

fn check_prob(p: f64) -> Result<(), SurrogateError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SurrogateError::Probability(p))
    }
}

/// Surfaces for both controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSurfaces {
    pub performant: ResponseSurface,
    pub safety: ResponseSurface,
}

impl ControllerSurfaces {
    pub fn get(&self, c: ControllerId) -> &ResponseSurface {
        match c {
            ControllerId::Performant => &self.performant,
            ControllerId::Safety => &self.safety,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        self.performant.validate()?;
        self.safety.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthConfig {
    pub surfaces: ControllerSurfaces,
    /// scenes to collect history on; duplicates by label are fine
    pub scenes: Vec<SceneFeatures>,
    /// records per (scene, controller)
    pub records_per_scene: usize,
    /// share of records collected with a camera fault
    pub failure_fraction: f64,
    /// relative standard deviation of observed speed
    pub speed_noise: f64,
    pub n_cameras: usize,
}

/// Samples a synthetic driving history from the configured surfaces.
/// Weather is uniform over [0,100]³ and density uniform over the three levels.
pub fn synth_ground_truth(config: &GroundTruthConfig, seed: u64) -> Result<Vec<LutRecord>, SurrogateError> {
    config.surfaces.validate()?;
    if !(0.0..=1.0).contains(&config.failure_fraction) {
        return Err(SurrogateError::Probability(config.failure_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cameras = config.n_cameras.max(1);
    let mut records = Vec::with_capacity(config.scenes.len() * 2 * config.records_per_scene);
    for scene in &config.scenes {
        for controller in [ControllerId::Performant, ControllerId::Safety] {
            let surface = config.surfaces.get(controller);
            for _ in 0..config.records_per_scene {
                let weather = Weather::new(
                    rng.gen_range(0.0..=100.0),
                    rng.gen_range(0.0..=100.0),
                    rng.gen_range(0.0..=100.0),
                );
                let density = TrafficDensity::from_index(rng.gen_range(0..3));
                let mut failures = vec![false; n_cameras];
                if rng.gen_bool(config.failure_fraction) {
                    failures[rng.gen_range(0..n_cameras)] = true;
                }
                let degraded = failures.iter().any(|&f| f);
                let mean_speed = surface.speed(scene, &weather, density, degraded);
                let noise = 1.0 + config.speed_noise * standard_normal(&mut rng);
                let p = surface.collision_probability(scene, &weather, density, degraded);
                records.push(LutRecord {
                    structural_label: scene.label(),
                    weather,
                    traffic_density: density,
                    failures,
                    controller,
                    observed_speed: (mean_speed * noise).max(0.0),
                    collided: rng.gen_bool(p),
                });
            }
        }
    }
    Ok(records)
}

// Box-Muller; one variate per call keeps the stream layout simple.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.sample(rand::distributions::Open01);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(p: f64) -> GroundTruthConfig {
        GroundTruthConfig {
            surfaces: ControllerSurfaces {
                performant: ResponseSurface::constant(10.0, p),
                safety: ResponseSurface::constant(6.0, p),
            },
            scenes: vec![SceneFeatures::new(RoadType::Freeway, 0.0, false, 100.0).unwrap()],
            records_per_scene: 100,
            failure_fraction: 0.3,
            speed_noise: 0.1,
            n_cameras: 3,
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let c = config(0.2);
        assert_eq!(synth_ground_truth(&c, 9).unwrap(), synth_ground_truth(&c, 9).unwrap());
        assert_ne!(synth_ground_truth(&c, 9).unwrap(), synth_ground_truth(&c, 10).unwrap());
    }

    #[test]
    fn zero_probability_never_collides() {
        let recs = synth_ground_truth(&config(0.0), 1).unwrap();
        assert!(recs.iter().all(|r| !r.collided));
    }

    #[test]
    fn rejects_bad_probability() {
        let mut c = config(0.1);
        c.surfaces.performant.degraded_collision = 1.5;
        assert!(matches!(synth_ground_truth(&c, 1), Err(SurrogateError::Probability(_))));
        let mut c = config(0.1);
        c.surfaces.safety.collision.insert(RoadType::Tunnel, -0.1);
        assert!(synth_ground_truth(&c, 1).is_err());
    }

    #[test]
    fn empirical_collision_rate_matches_surface() {
        let mut c = config(0.23);
        c.records_per_scene = 100_000;
        let recs = synth_ground_truth(&c, 3).unwrap();
        let perf: Vec<_> = recs.iter().filter(|r| r.controller == ControllerId::Performant).collect();
        assert_eq!(perf.len(), 100_000);
        let rate = perf.iter().filter(|r| r.collided).count() as f64 / perf.len() as f64;
        assert!((rate - 0.23).abs() < 0.01, "{rate}");
    }

    #[test]
    fn surface_terms_add_up() {
        let mut s = ResponseSurface::constant(10.0, 0.05);
        s.weather_collision = 0.4;
        s.degraded_collision = 0.3;
        s.weather_speed_drop = 0.5;
        let scene = SceneFeatures::new(RoadType::MainRoad, 0.0, false, 10.0).unwrap();
        let storm = Weather::new(100.0, 100.0, 100.0);
        assert!((s.collision_probability(&scene, &storm, TrafficDensity::Low, true) - 0.75).abs() < 1e-12);
        assert!((s.speed(&scene, &storm, TrafficDensity::Low, false) - 5.0).abs() < 1e-12);
        s.degraded_collision = 0.9;
        assert_eq!(s.collision_probability(&scene, &storm, TrafficDensity::Low, true), 1.0);
    }
}
