//! Generative models for the exogenous parts of the state: weather, traffic,
//! sensor failures, and monitor alarms.
//!
//! The simulator uses these as ground truth and the planner samples futures
//! from them. Every sampler takes the caller's rng so stream ownership stays
//! with the caller.

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{RoadType, SceneFeatures, SystemState, TrafficDensity, Weather};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvModelError {
    #[error("transition matrix row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("transition matrix entry ({row}, {col}) = {value} is not a probability")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("{0} must be non-negative")]
    Negative(&'static str),
    #[error("tunnel_suppression must lie in [0, 1], got {0}")]
    Suppression(f64),
    #[error("no alarm parameters configured for cell ({weather:?}, {road_type}, {density:?})")]
    MissingCell {
        weather: WeatherBucket,
        road_type: RoadType,
        density: TrafficDensity,
    },
}

/// Draws an exponential variate with the given mean. Always strictly positive.
pub fn sample_exponential<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -mean * u.ln()
}

/// Random-walk weather step: each channel moves by an independent uniform
/// draw in `[-delta_max, delta_max]` and is clamped back into [0, 100].
pub fn step_weather<R: Rng + ?Sized>(w: &Weather, delta_max: f64, rng: &mut R) -> Weather {
    if delta_max <= 0.0 {
        return *w;
    }
    let c = w.channels();
    Weather::from_channels([
        c[0] + rng.gen_range(-delta_max..=delta_max),
        c[1] + rng.gen_range(-delta_max..=delta_max),
        c[2] + rng.gen_range(-delta_max..=delta_max),
    ])
}

/// Markov chain over traffic density levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct TrafficModel {
    matrix: [[f64; 3]; 3],
}

impl TrafficModel {
    pub fn new(matrix: [[f64; 3]; 3]) -> Result<Self, EnvModelError> {
        for (row, r) in matrix.iter().enumerate() {
            for (col, &value) in r.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(EnvModelError::BadEntry { row, col, value });
                }
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(EnvModelError::NotStochastic { row, sum });
            }
        }
        Ok(TrafficModel { matrix })
    }

    pub fn identity() -> Self {
        TrafficModel {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Chain that stays put with probability `stay` and otherwise moves to
    /// `toward` (or stays, if already there).
    pub fn sticky(stay: f64, toward: TrafficDensity) -> Result<Self, EnvModelError> {
        let mut matrix = [[0.0; 3]; 3];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] += stay;
            row[toward.index()] += 1.0 - stay;
        }
        TrafficModel::new(matrix)
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.matrix
    }

    pub fn step<R: Rng + ?Sized>(&self, d: TrafficDensity, rng: &mut R) -> TrafficDensity {
        let row = &self.matrix[d.index()];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return TrafficDensity::from_index(j);
            }
        }
        // u landed in the rounding slack above the cumulative sum
        let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(d.index());
        TrafficDensity::from_index(last)
    }
}

impl TryFrom<[[f64; 3]; 3]> for TrafficModel {
    type Error = EnvModelError;

    fn try_from(m: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        TrafficModel::new(m)
    }
}

impl From<TrafficModel> for [[f64; 3]; 3] {
    fn from(t: TrafficModel) -> Self {
        t.matrix
    }
}

pub fn step_traffic<R: Rng + ?Sized>(d: TrafficDensity, model: &TrafficModel, rng: &mut R) -> TrafficDensity {
    model.step(d, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeibullParams {
    pub shape: f64,
    /// seconds
    pub scale: f64,
}

impl WeibullParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self, EnvModelError> {
        let p = WeibullParams { shape, scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), EnvModelError> {
        if !(self.shape > 0.0) || !self.shape.is_finite() {
            return Err(EnvModelError::NonPositive("weibull shape"));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(EnvModelError::NonPositive("weibull scale"));
        }
        Ok(())
    }

    /// Unconditional lifetime draw by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.scale * (-u.ln()).powf(1.0 / self.shape)
    }

    /// Residual lifetime of a component that has survived `age` seconds.
    pub fn sample_residual<R: Rng + ?Sized>(&self, age: f64, rng: &mut R) -> f64 {
        if age <= 0.0 {
            return self.sample(rng);
        }
        let u: f64 = rng.sample(Open01);
        let h0 = (age / self.scale).powf(self.shape);
        let t = self.scale * (h0 - u.ln()).powf(1.0 / self.shape);
        // rounding can collapse tiny residuals to zero
        (t - age).max(f64::MIN_POSITIVE)
    }
}

/// Draws a Weibull failure time and reports it only if it falls in `(0, window]`.
pub fn sample_permanent_failure<R: Rng + ?Sized>(
    params: &WeibullParams,
    window: f64,
    rng: &mut R,
) -> Option<f64> {
    let t = params.sample(rng);
    (t <= window).then_some(t)
}

/// Like [`sample_permanent_failure`] but conditioned on survival up to `age`.
pub fn sample_permanent_failure_after<R: Rng + ?Sized>(
    params: &WeibullParams,
    age: f64,
    window: f64,
    rng: &mut R,
) -> Option<f64> {
    let t = params.sample_residual(age, rng);
    (t <= window).then_some(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntermittentParams {
    /// events per second in benign conditions
    pub base_rate: f64,
    /// exponential growth per unit of occlusion severity
    pub growth: f64,
    pub tunnel_suppression: f64,
    /// mean occlusion duration, seconds
    pub mean_duration: f64,
}

impl IntermittentParams {
    pub fn validate(&self) -> Result<(), EnvModelError> {
        if !(self.base_rate >= 0.0) {
            return Err(EnvModelError::Negative("base_rate"));
        }
        if !(self.growth >= 0.0) {
            return Err(EnvModelError::Negative("growth"));
        }
        if !(0.0..=1.0).contains(&self.tunnel_suppression) {
            return Err(EnvModelError::Suppression(self.tunnel_suppression));
        }
        if !(self.mean_duration > 0.0) {
            return Err(EnvModelError::NonPositive("mean_duration"));
        }
        Ok(())
    }
}

/// Proxy for "sunny or heavy precipitation": the larger of rain intensity and
/// clear sky, in [0, 1].
pub fn occlusion_severity(w: &Weather) -> f64 {
    w.precipitation.max(100.0 - w.cloudiness) / 100.0
}

/// Rate of transient camera occlusion events.
pub fn intermittent_failure_rate(w: &Weather, scene: &SceneFeatures, params: &IntermittentParams) -> f64 {
    let suppression = if scene.road_type == RoadType::Tunnel {
        params.tunnel_suppression
    } else {
        1.0
    };
    params.base_rate * (params.growth * occlusion_severity(w)).exp() * suppression
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherBucket {
    Dry,
    Wet,
    Storm,
}

impl WeatherBucket {
    pub fn of(w: &Weather) -> Self {
        if w.precipitation < 100.0 / 3.0 {
            WeatherBucket::Dry
        } else if w.precipitation < 200.0 / 3.0 {
            WeatherBucket::Wet
        } else {
            WeatherBucket::Storm
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmParams {
    pub mean_interarrival: f64,
    pub mean_duration: f64,
}

impl AlarmParams {
    pub fn validate(&self) -> Result<(), EnvModelError> {
        if !(self.mean_interarrival > 0.0) {
            return Err(EnvModelError::NonPositive("mean_interarrival"));
        }
        if !(self.mean_duration > 0.0) {
            return Err(EnvModelError::NonPositive("mean_duration"));
        }
        Ok(())
    }
}

/// One cell of the alarm table. `None` fields match anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmCell {
    #[serde(default)]
    pub weather: Option<WeatherBucket>,
    #[serde(default)]
    pub road_type: Option<RoadType>,
    #[serde(default)]
    pub density: Option<TrafficDensity>,
    #[serde(flatten)]
    pub params: AlarmParams,
}

impl AlarmCell {
    fn matches(&self, weather: WeatherBucket, road_type: RoadType, density: TrafficDensity) -> bool {
        self.weather.is_none_or(|w| w == weather)
            && self.road_type.is_none_or(|r| r == road_type)
            && self.density.is_none_or(|d| d == density)
    }
}

/// Alarm inter-arrival and duration moments per (weather, road, density)
/// cell; the first matching cell wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmModel {
    pub cells: Vec<AlarmCell>,
}

impl AlarmModel {
    pub fn uniform(params: AlarmParams) -> Self {
        AlarmModel {
            cells: vec![AlarmCell {
                weather: None,
                road_type: None,
                density: None,
                params,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), EnvModelError> {
        self.cells.iter().try_for_each(|c| c.params.validate())
    }

    pub fn params_for(
        &self,
        weather: &Weather,
        scene: &SceneFeatures,
        density: TrafficDensity,
    ) -> Result<&AlarmParams, EnvModelError> {
        let bucket = WeatherBucket::of(weather);
        self.cells
            .iter()
            .find(|c| c.matches(bucket, scene.road_type, density))
            .map(|c| &c.params)
            .ok_or(EnvModelError::MissingCell {
                weather: bucket,
                road_type: scene.road_type,
                density,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlarmSample {
    pub arrival: f64,
    pub duration: f64,
}

/// Samples time-to-next-alarm and alarm duration for the state's cell.
pub fn sample_alarm<R: Rng + ?Sized>(
    model: &AlarmModel,
    state: &SystemState,
    scene: &SceneFeatures,
    rng: &mut R,
) -> Result<AlarmSample, EnvModelError> {
    let p = model.params_for(&state.weather, scene, state.traffic_density)?;
    Ok(AlarmSample {
        arrival: sample_exponential(p.mean_interarrival, rng),
        duration: sample_exponential(p.mean_duration, rng),
    })
}

/// The full set of generative models, as configured for an experiment.
///
/// `None` disables a process: no permanent failures, no intermittent
/// occlusion, or no monitor alarms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvModels {
    /// half-width of the uniform weather step applied at each query, percent
    #[serde(default = "default_weather_delta")]
    pub weather_delta: f64,
    #[serde(default = "TrafficModel::identity")]
    pub traffic: TrafficModel,
    #[serde(default)]
    pub permanent: Option<WeibullParams>,
    #[serde(default)]
    pub intermittent: Option<IntermittentParams>,
    #[serde(default)]
    pub alarms: Option<AlarmModel>,
    /// component whose failure is modelled (the centre camera)
    #[serde(default = "default_failure_component")]
    pub failure_component: usize,
}

fn default_weather_delta() -> f64 {
    10.0
}

fn default_failure_component() -> usize {
    1
}

impl Default for EnvModels {
    fn default() -> Self {
        EnvModels {
            weather_delta: default_weather_delta(),
            traffic: TrafficModel::identity(),
            permanent: None,
            intermittent: None,
            alarms: None,
            failure_component: default_failure_component(),
        }
    }
}

impl EnvModels {
    pub fn validate(&self) -> Result<(), EnvModelError> {
        if !(self.weather_delta >= 0.0) {
            return Err(EnvModelError::Negative("weather_delta"));
        }
        if let Some(p) = &self.permanent {
            p.validate()?;
        }
        if let Some(p) = &self.intermittent {
            p.validate()?;
        }
        if let Some(a) = &self.alarms {
            a.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn scene(road: RoadType) -> SceneFeatures {
        SceneFeatures::new(road, 0.0, false, 100.0).unwrap()
    }

    /// Kolmogorov distribution tail, used as an independent uniformity check.
    fn ks_pvalue(d: f64, n: usize) -> f64 {
        let sqrt_n = (n as f64).sqrt();
        let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
        let mut sum = 0.0;
        for j in 1..200 {
            let j = j as f64;
            sum += 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        }
        sum.clamp(0.0, 1.0)
    }

    #[test]
    fn zero_step_is_identity() {
        let w = Weather::new(12.0, 34.0, 56.0);
        assert_eq!(step_weather(&w, 0.0, &mut rng(1)), w);
    }

    #[test]
    fn weather_stays_clamped() {
        let mut r = rng(2);
        let mut w = Weather::new(100.0, 100.0, 0.0);
        for _ in 0..10_000 {
            w = step_weather(&w, 30.0, &mut r);
            for c in w.channels() {
                assert!((0.0..=100.0).contains(&c));
            }
        }
    }

    #[test]
    fn weather_increments_are_uniform() {
        let mut r = rng(3);
        let start = Weather::new(50.0, 50.0, 50.0);
        let mut incs: Vec<f64> = (0..100_000)
            .map(|_| step_weather(&start, 5.0, &mut r).cloudiness - 50.0)
            .collect();
        incs.sort_by(f64::total_cmp);
        let n = incs.len();
        let d = incs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x + 5.0) / 10.0;
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks_pvalue(d, n) > 0.01, "D = {d}");
    }

    #[test]
    fn traffic_matrix_validation() {
        assert!(TrafficModel::new([[0.5, 0.4, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
        assert!(TrafficModel::new([[1.2, -0.2, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn traffic_identity_and_deterministic_rows() {
        let mut r = rng(4);
        let id = TrafficModel::identity();
        for d in TrafficDensity::ALL {
            assert_eq!(id.step(d, &mut r), d);
        }
        let jump = TrafficModel::new([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        for _ in 0..1000 {
            assert_eq!(jump.step(TrafficDensity::Low, &mut r), TrafficDensity::High);
        }
    }

    #[test]
    fn traffic_uniform_frequencies() {
        let third = 1.0 / 3.0;
        let m = TrafficModel::new([[third; 3]; 3]).unwrap();
        let mut r = rng(5);
        let mut counts = [0usize; 3];
        let mut d = TrafficDensity::Low;
        let n = 100_000;
        for _ in 0..n {
            d = m.step(d, &mut r);
            counts[d.index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - third).abs() < 0.01);
        }
    }

    #[test]
    fn vanishing_window_never_fails() {
        let p = WeibullParams::new(2.0, 100.0).unwrap();
        let mut r = rng(6);
        let hits = (0..100_000)
            .filter(|_| sample_permanent_failure(&p, 1e-9, &mut r).is_some())
            .count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn weibull_means() {
        let mut r = rng(7);
        let n = 100_000;
        let exp = WeibullParams::new(1.0, 50.0).unwrap();
        let mean = (0..n).map(|_| exp.sample(&mut r)).sum::<f64>() / n as f64;
        assert!((mean / 50.0 - 1.0).abs() < 0.02, "{mean}");

        let ray = WeibullParams::new(2.0, 100.0).unwrap();
        let mean = (0..n).map(|_| ray.sample(&mut r)).sum::<f64>() / n as f64;
        // Γ(1.5) = √π / 2
        let expected = 100.0 * std::f64::consts::PI.sqrt() / 2.0;
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn weibull_residual_memoryless_for_shape_one() {
        let p = WeibullParams::new(1.0, 20.0).unwrap();
        let mut r = rng(8);
        let n = 100_000;
        let mean = (0..n).map(|_| p.sample_residual(500.0, &mut r)).sum::<f64>() / n as f64;
        assert!((mean / 20.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn weibull_residual_matches_conditional_survival() {
        // P(T > age + x | T > age) = exp((age/λ)^k - ((age+x)/λ)^k)
        let p = WeibullParams::new(2.0, 100.0).unwrap();
        let (age, x) = (80.0, 30.0);
        let expected = ((age / 100.0f64).powi(2) - ((age + x) / 100.0f64).powi(2)).exp();
        let mut r = rng(9);
        let n = 100_000;
        let survived = (0..n).filter(|_| p.sample_residual(age, &mut r) > x).count();
        assert!((survived as f64 / n as f64 - expected).abs() < 0.01);
    }

    #[test]
    fn intermittent_rate_shapes() {
        let base = IntermittentParams {
            base_rate: 0.01,
            growth: 0.0,
            tunnel_suppression: 0.2,
            mean_duration: 10.0,
        };
        for w in [Weather::new(0.0, 0.0, 0.0), Weather::new(100.0, 100.0, 50.0)] {
            assert_eq!(intermittent_failure_rate(&w, &scene(RoadType::MainRoad), &base), 0.01);
        }
        let tunnel = IntermittentParams {
            tunnel_suppression: 0.0,
            growth: 2.0,
            ..base
        };
        assert_eq!(
            intermittent_failure_rate(&Weather::new(0.0, 100.0, 0.0), &scene(RoadType::Tunnel), &tunnel),
            0.0
        );
        let g = IntermittentParams { growth: 1.7, ..base };
        let wet = intermittent_failure_rate(&Weather::new(100.0, 100.0, 0.0), &scene(RoadType::Freeway), &g);
        let dry = intermittent_failure_rate(&Weather::new(100.0, 0.0, 0.0), &scene(RoadType::Freeway), &g);
        assert!((wet / dry - 1.7f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn alarm_duration_mean_and_cells() {
        let model = AlarmModel {
            cells: vec![
                AlarmCell {
                    weather: Some(WeatherBucket::Storm),
                    road_type: None,
                    density: None,
                    params: AlarmParams {
                        mean_interarrival: 30.0,
                        mean_duration: 4.0,
                    },
                },
                AlarmCell {
                    weather: None,
                    road_type: None,
                    density: None,
                    params: AlarmParams {
                        mean_interarrival: 100.0,
                        mean_duration: 10.0,
                    },
                },
            ],
        };
        let sc = scene(RoadType::MainRoad);
        let mut state = SystemState::new(3, crate::domain::ControllerId::Safety);
        let mut r = rng(10);
        let n = 100_000;
        let mean_dur =
            (0..n).map(|_| sample_alarm(&model, &state, &sc, &mut r).unwrap().duration).sum::<f64>() / n as f64;
        assert!((mean_dur / 10.0 - 1.0).abs() < 0.02);

        state.weather = Weather::new(50.0, 90.0, 50.0);
        let mean_arr =
            (0..n).map(|_| sample_alarm(&model, &state, &sc, &mut r).unwrap().arrival).sum::<f64>() / n as f64;
        assert!((mean_arr / 30.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn alarm_missing_cell() {
        let model = AlarmModel {
            cells: vec![AlarmCell {
                weather: None,
                road_type: Some(RoadType::Tunnel),
                density: None,
                params: AlarmParams {
                    mean_interarrival: 1.0,
                    mean_duration: 1.0,
                },
            }],
        };
        let state = SystemState::new(3, crate::domain::ControllerId::Safety);
        let err = sample_alarm(&model, &state, &scene(RoadType::Freeway), &mut rng(1)).unwrap_err();
        assert!(matches!(err, EnvModelError::MissingCell { .. }));
    }

    #[test]
    fn samplers_reproducible_and_positive() {
        let model = AlarmModel::uniform(AlarmParams {
            mean_interarrival: 5.0,
            mean_duration: 2.0,
        });
        let state = SystemState::new(3, crate::domain::ControllerId::Safety);
        let sc = scene(RoadType::Freeway);
        let wb = WeibullParams::new(0.7, 3.0).unwrap();
        let draw = |seed| {
            let mut r = rng(seed);
            (0..1000)
                .map(|_| {
                    let a = sample_alarm(&model, &state, &sc, &mut r).unwrap();
                    (a.arrival, a.duration, wb.sample(&mut r))
                })
                .collect::<Vec<_>>()
        };
        let a = draw(42);
        assert_eq!(a, draw(42));
        assert!(a.iter().all(|&(x, y, z)| x > 0.0 && y > 0.0 && z > 0.0));
    }

    proptest::proptest! {
        #[test]
        fn rate_monotone_in_precip_and_sun(
            c in 0.0f64..=100.0, p in 0.0f64..=100.0, dp in 0.0f64..=50.0, dc in 0.0f64..=50.0,
        ) {
            let params = IntermittentParams { base_rate: 0.02, growth: 1.3, tunnel_suppression: 0.1, mean_duration: 5.0 };
            let sc = scene(RoadType::MainRoad);
            let r0 = intermittent_failure_rate(&Weather::new(c, p, 0.0), &sc, &params);
            let wetter = intermittent_failure_rate(&Weather::new(c, p + dp, 0.0), &sc, &params);
            let sunnier = intermittent_failure_rate(&Weather::new(c - dc, p, 0.0), &sc, &params);
            proptest::prop_assert!(wetter >= r0);
            proptest::prop_assert!(sunnier >= r0);
        }
    }
}
