use rand::Rng;

use super::{FailureSchedule, SimError};
use crate::domain::{SceneFeatures, SystemState};
use crate::envmodels::{intermittent_failure_rate, sample_exponential, EnvModels};

/// Centre-camera failure injector.
///
/// Permanent: a single Weibull onset, latched. Intermittent: exponential
/// onsets at the weather- and road-dependent rate, each lasting an
/// exponential duration. The onset clock is resampled whenever conditions
/// change, which is exact for a memoryless process.
#[derive(Debug, Clone)]
pub struct FailureProcess {
    schedule: FailureSchedule,
    failed: bool,
    next_change: f64,
}

/// One failure interval; `end` is `None` for a latched failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureInterval {
    pub onset: f64,
    pub end: Option<f64>,
}

impl FailureProcess {
    pub fn new<R: Rng + ?Sized>(schedule: FailureSchedule, env: &EnvModels, rng: &mut R) -> Self {
        let next_change = match (schedule, &env.permanent) {
            (FailureSchedule::PermanentAtRandom, Some(w)) => w.sample(rng),
            _ => f64::INFINITY,
        };
        FailureProcess {
            schedule,
            failed: false,
            next_change,
        }
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn next_change(&self) -> f64 {
        self.next_change
    }

    /// Resamples the time to the next intermittent onset under new conditions.
    pub fn refresh<R: Rng + ?Sized>(&mut self, now: f64, state: &SystemState, scene: &SceneFeatures, env: &EnvModels, rng: &mut R) {
        if self.schedule != FailureSchedule::Intermittent || self.failed {
            return;
        }
        let Some(p) = &env.intermittent else { return };
        let rate = intermittent_failure_rate(&state.weather, scene, p);
        self.next_change = if rate > 0.0 {
            now + sample_exponential(1.0 / rate, rng)
        } else {
            f64::INFINITY
        };
    }

    /// Applies the due change at `now`. Returns the new failed flag and, for
    /// an intermittent onset, its sampled duration.
    pub fn fire<R: Rng + ?Sized>(&mut self, now: f64, env: &EnvModels, rng: &mut R) -> (bool, Option<f64>) {
        match self.schedule {
            FailureSchedule::None => {
                self.next_change = f64::INFINITY;
                (false, None)
            }
            FailureSchedule::PermanentAtRandom => {
                self.failed = true;
                self.next_change = f64::INFINITY;
                (true, None)
            }
            FailureSchedule::Intermittent => {
                self.failed = !self.failed;
                if self.failed {
                    let mean = env.intermittent.map_or(1.0, |p| p.mean_duration);
                    let d = sample_exponential(mean, rng);
                    self.next_change = now + d;
                    (true, Some(d))
                } else {
                    // the caller refreshes the onset clock with current conditions
                    self.next_change = f64::INFINITY;
                    (false, None)
                }
            }
        }
    }
}

/// Failure intervals over `[0, horizon)` under constant conditions.
pub fn inject_failure<R: Rng + ?Sized>(
    schedule: FailureSchedule,
    env: &EnvModels,
    state: &SystemState,
    scene: &SceneFeatures,
    horizon: f64,
    rng: &mut R,
) -> Vec<FailureInterval> {
    let mut p = FailureProcess::new(schedule, env, rng);
    p.refresh(0.0, state, scene, env, rng);
    let mut out: Vec<FailureInterval> = Vec::new();
    while p.next_change() < horizon {
        let t = p.next_change();
        let (failed, duration) = p.fire(t, env, rng);
        if failed {
            out.push(FailureInterval {
                onset: t,
                end: duration.map(|d| t + d),
            });
        } else {
            p.refresh(t, state, scene, env, rng);
        }
    }
    out
}

/// Runtime-monitor alarm process: exponential idle gaps and durations from
/// the alarm table cell of the current conditions.
#[derive(Debug, Clone)]
pub struct AlarmProcess {
    active: bool,
    next_toggle: f64,
}

impl AlarmProcess {
    pub fn new() -> Self {
        AlarmProcess {
            active: false,
            next_toggle: f64::INFINITY,
        }
    }

    pub fn active(&self) -> bool {
        self.active
    }

    pub fn next_toggle(&self) -> f64 {
        self.next_toggle
    }

    pub fn refresh<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        state: &SystemState,
        scene: &SceneFeatures,
        env: &EnvModels,
        rng: &mut R,
    ) -> Result<(), SimError> {
        if self.active {
            return Ok(());
        }
        let Some(model) = &env.alarms else { return Ok(()) };
        let p = model
            .params_for(&state.weather, scene, state.traffic_density)
            .map_err(|e| SimError::Env(e.to_string()))?;
        self.next_toggle = now + sample_exponential(p.mean_interarrival, rng);
        Ok(())
    }

    pub fn fire<R: Rng + ?Sized>(
        &mut self,
        now: f64,
        state: &SystemState,
        scene: &SceneFeatures,
        env: &EnvModels,
        rng: &mut R,
    ) -> Result<bool, SimError> {
        self.active = !self.active;
        if self.active {
            let model = env.alarms.as_ref().expect("alarm fired without a model");
            let p = model
                .params_for(&state.weather, scene, state.traffic_density)
                .map_err(|e| SimError::Env(e.to_string()))?;
            self.next_toggle = now + sample_exponential(p.mean_duration, rng);
        } else {
            self.next_toggle = f64::INFINITY;
            self.refresh(now, state, scene, env, rng)?;
        }
        Ok(self.active)
    }
}

impl Default for AlarmProcess {
    fn default() -> Self {
        Self::new()
    }
}
