use rand::Rng;

use super::processes::{AlarmProcess, FailureProcess};
use super::{collision_trial, CollisionOutcome, EpisodeMetrics, EpisodeRecord, LogEvent, SegmentLog, SimConfig, SimError};
use crate::domain::{Belief, ControllerId, SceneFeatures, SystemState, TrafficDensity, Track, Weather};
use crate::envmodels::step_weather;
use crate::monitors::{detect_occlusion, synth_frame, Blob, FrameSpec};
use crate::planner::SmdpModel;
use crate::reward::infraction_score;
use crate::seed::{derive_seed, stream_rng, Stream};
use crate::surrogate::{BeliefSource, Surrogate, SurrogateError, TrackSurrogate};
use crate::switcher::{
    DecisionEvent, DecisionEventKind, NoPlanner, ReversePlanner, SmdpPlanner, Strategy, Switcher,
};

const EPS: f64 = 1e-9;

/// Runs one episode and returns its metrics.
pub fn run_episode(
    track: &Track,
    strategy: Strategy,
    cfg: &SimConfig,
    surrogate: Option<&Surrogate>,
    seed: u64,
) -> Result<EpisodeMetrics, SimError> {
    run_episode_logged(track, strategy, cfg, surrogate, seed).map(|r| r.metrics)
}

struct NoBeliefs;

impl BeliefSource for NoBeliefs {
    fn belief(&self, _: &SystemState, _: ControllerId) -> Result<Belief, SurrogateError> {
        Err(SurrogateError::EmptyRecords)
    }
}

/// Runs one episode and keeps the full event log.
pub fn run_episode_logged(
    track: &Track,
    strategy: Strategy,
    cfg: &SimConfig,
    surrogate: Option<&Surrogate>,
    seed: u64,
) -> Result<EpisodeRecord, SimError> {
    cfg.validate()?;
    track.validate().map_err(|e| SimError::Config(e.to_string()))?;
    if strategy.needs_surrogate() && surrogate.is_none() {
        return Err(SimError::Config(format!("strategy {strategy} needs a lookup table")));
    }
    if let Some(s) = surrogate.filter(|_| strategy.needs_surrogate()) {
        s.table
            .check_coverage(track)
            .map_err(|e| SimError::Config(e.to_string()))?;
    }
    let profile = strategy.profile();
    let env = cfg.failure_schedule.restrict(&cfg.env);
    let component = env.failure_component;

    let mut rng_env = stream_rng(seed, Stream::Environment);
    let mut rng_fail = stream_rng(seed, Stream::Failures);
    let mut rng_alarm = stream_rng(seed, Stream::Alarms);
    let mut rng_col = stream_rng(seed, Stream::Collisions);
    let mut rng_frame = stream_rng(seed, Stream::Frames);
    let mut rng_init = stream_rng(seed, Stream::Initial);

    let mut state = SystemState::new(cfg.n_cameras, profile.initial);
    state.weather = Weather::new(
        rng_init.gen_range(0.0..=100.0),
        rng_init.gen_range(0.0..=100.0),
        rng_init.gen_range(0.0..=100.0),
    );
    state.traffic_density = TrafficDensity::from_index(rng_init.gen_range(0..3));

    let table_beliefs;
    let beliefs: &dyn BeliefSource = match surrogate {
        Some(s) => {
            table_beliefs = TrackSurrogate { surrogate: s, track };
            &table_beliefs
        }
        None => &NoBeliefs,
    };
    let mut smdp_planner;
    let mut no_planner = NoPlanner;
    let planner: &mut dyn ReversePlanner = match surrogate {
        Some(s) if strategy.uses_planner() => {
            smdp_planner = SmdpPlanner::new(
                SmdpModel {
                    track,
                    surrogate: s,
                    env: &env,
                    weights: cfg.weights,
                    cfg: cfg.mcts,
                },
                derive_seed(seed, &[Stream::Planner as u64]),
            );
            &mut smdp_planner
        }
        _ => &mut no_planner,
    };
    let budget = planner.budget();
    let mut switcher = Switcher::new(profile, cfg.switch_config(), cfg.latency, cfg.weights);

    let mut failure = FailureProcess::new(cfg.failure_schedule, &env, &mut rng_fail);
    let mut alarm = AlarmProcess::new();
    let mut truth_failed = false;

    let mut t = 0.0;
    let mut next_query = cfg.mcts.tau_q;
    let mut events = vec![
        LogEvent::Start {
            t,
            weather: state.weather,
            density: state.traffic_density,
            controller: state.controller,
        },
        LogEvent::SegmentEnter {
            t,
            segment: 0,
            road: track.scene(0).road_type,
        },
    ];
    failure.refresh(t, &state, track.scene(0), &env, &mut rng_fail);
    alarm.refresh(t, &state, track.scene(0), &env, &mut rng_alarm)?;

    state.v = target_speed(cfg, &state, track.scene(0), truth_failed, None);
    let mut segments = Vec::with_capacity(track.len());
    let mut entered_at = 0.0;
    let mut exposure = 0.0;
    let mut seg_time = 0.0;
    let mut latencies = Vec::new();
    let mut reverse_switches = 0u32;
    let mut collision = CollisionOutcome::None;
    let mut timed_out = false;
    let mut logged_transitions = 0;
    let route_completion;

    loop {
        let scene = track.scene(state.segment_index);
        let degraded = truth_failed || state.monitor.ood_alarm;
        let target = target_speed(cfg, &state, scene, truth_failed, switcher.speed_command());
        let remaining = (scene.segment_length - state.segment_offset).max(0.0);
        let t_seg = t + time_to_cover(state.v, target, cfg.acceleration, remaining);
        let mut t_next = t_seg
            .min(next_query)
            .min(failure.next_change())
            .min(alarm.next_toggle())
            .min(switcher.decision_ready_at().unwrap_or(f64::INFINITY))
            .min(switcher.completion_due().unwrap_or(f64::INFINITY));
        if switcher.gate_pending() {
            t_next = t_next.min(t + cfg.tick);
        }
        let p_now = cfg
            .surfaces
            .get(state.controller)
            .collision_probability(scene, &state.weather, state.traffic_density, degraded);
        if t_next > cfg.max_time {
            let (dist, _) = advance(state.v, target, cfg.acceleration, cfg.max_time - t);
            state.segment_offset = (state.segment_offset + dist).min(scene.segment_length);
            t = cfg.max_time;
            timed_out = true;
            route_completion = (track.distance_before(state.segment_index) + state.segment_offset) / track.total_length();
            break;
        }
        let dt = t_next - t;
        exposure += p_now * dt;
        seg_time += dt;
        let (dist, v_end) = advance(state.v, target, cfg.acceleration, dt);
        state.segment_offset = if t_seg <= t_next + EPS {
            scene.segment_length
        } else {
            (state.segment_offset + dist).min(scene.segment_length)
        };
        state.v = v_end;
        t = t_next;
        state.clock = t;

        let mut kinds: Vec<DecisionEventKind> = Vec::new();
        let mut env_changed = false;

        if t_seg <= t + EPS {
            let p_avg = if seg_time > 0.0 { exposure / seg_time } else { p_now };
            let outcome = collision_trial(p_avg.clamp(0.0, 1.0), cfg.vehicle_collision_share, scene.road_type, &mut rng_col)?;
            segments.push(SegmentLog {
                index: state.segment_index,
                road_type: scene.road_type,
                entered_at,
                exited_at: t,
                collision_probability: p_avg,
                controller_at_exit: state.controller,
            });
            if outcome != CollisionOutcome::None {
                collision = outcome;
                events.push(LogEvent::Collision {
                    t,
                    segment: state.segment_index,
                    kind: outcome,
                });
                route_completion = track.distance_before(state.segment_index) / track.total_length();
                break;
            }
            state.segment_index += 1;
            state.segment_offset = 0.0;
            exposure = 0.0;
            seg_time = 0.0;
            entered_at = t;
            if state.segment_index >= track.len() {
                route_completion = 1.0;
                break;
            }
            events.push(LogEvent::SegmentEnter {
                t,
                segment: state.segment_index,
                road: track.scene(state.segment_index).road_type,
            });
            kinds.push(DecisionEventKind::SpatialChange);
            let density = env.traffic.step(state.traffic_density, &mut rng_env);
            if density != state.traffic_density {
                state.traffic_density = density;
                events.push(LogEvent::Traffic { t, density });
                kinds.push(DecisionEventKind::TrafficChange);
            }
            env_changed = true;
        }
        let scene = track.scene(state.segment_index);
        if next_query <= t + EPS {
            state.weather = step_weather(&state.weather, env.weather_delta, &mut rng_env);
            next_query += cfg.mcts.tau_q;
            events.push(LogEvent::WeatherQuery { t, weather: state.weather });
            kinds.push(DecisionEventKind::TemporalChange);
            env_changed = true;
        }
        if failure.next_change() <= t + EPS {
            let (failed, _) = failure.fire(t, &env, &mut rng_fail);
            truth_failed = failed;
            let observed = observe_camera(cfg, failed, &mut rng_frame);
            state.failures[component] = observed;
            state.monitor.occlusion_flags[component] = observed;
            events.push(if failed {
                LogEvent::FailureOnset { t, component, observed }
            } else {
                LogEvent::FailureClear { t, component, observed }
            });
            kinds.push(DecisionEventKind::ComponentFailure);
            if !failed {
                failure.refresh(t, &state, scene, &env, &mut rng_fail);
            }
        }
        if alarm.next_toggle() <= t + EPS {
            let on = alarm.fire(t, &state, scene, &env, &mut rng_alarm)?;
            state.monitor.ood_alarm = on;
            events.push(if on { LogEvent::AlarmOn { t } } else { LogEvent::AlarmOff { t } });
            kinds.push(DecisionEventKind::MonitorChange);
        }
        if env_changed {
            failure.refresh(t, &state, scene, &env, &mut rng_fail);
            alarm.refresh(t, &state, scene, &env, &mut rng_alarm)?;
        }

        if switcher.decision_ready_at().is_some_and(|r| r <= t + EPS) {
            if let Some(d) = switcher.decide(t, &state, track, beliefs, planner) {
                latencies.push(d.decision_latency);
                if let Some(rec) = switcher.decisions().last() {
                    events.push(LogEvent::Decision(rec.clone()));
                }
            }
        }
        if let Some(flip) = switcher.tick(t, &state, track) {
            state.controller = flip.to;
            state.switch_count += 1;
            if flip.to == ControllerId::Performant {
                reverse_switches += 1;
            }
            events.push(LogEvent::ControllerFlip {
                t,
                to: flip.to,
                omega: state.switch_count,
            });
        }
        for rec in &switcher.transitions()[logged_transitions..] {
            events.push(LogEvent::Transition(rec.clone()));
        }
        logged_transitions = switcher.transitions().len();
        if let Some(&kind) = kinds.first() {
            switcher.notify(DecisionEvent { kind, timestamp: t }, &state, next_query - t, budget);
        }
    }
    events.push(LogEvent::Finish {
        t,
        route_completion,
        timed_out,
    });
    let vehicle_collision = collision == CollisionOutcome::Vehicle;
    let object_collision = collision == CollisionOutcome::Object;
    let metrics = EpisodeMetrics {
        strategy,
        track: track.id.clone(),
        seed,
        travel_time: t,
        route_completion,
        vehicle_collision,
        object_collision,
        switch_count: state.switch_count,
        reverse_switches,
        infraction: infraction_score(route_completion.clamp(0.0, 1.0), vehicle_collision, object_collision)
            .map_err(|e| SimError::Config(e.to_string()))?,
        decision_latencies: latencies,
        timed_out,
        segments,
    };
    Ok(EpisodeRecord {
        metrics,
        events,
        decisions: switcher.decisions().to_vec(),
        transitions: switcher.transitions().to_vec(),
    })
}

fn target_speed(cfg: &SimConfig, state: &SystemState, scene: &SceneFeatures, failed: bool, command: Option<f64>) -> f64 {
    let degraded = failed || state.monitor.ood_alarm;
    let v = cfg
        .surfaces
        .get(state.controller)
        .speed(scene, &state.weather, state.traffic_density, degraded);
    command.map_or(v, |c| v.min(c))
}

/// Renders the camera under the current fault state and runs the detector.
fn observe_camera<R: Rng + ?Sized>(cfg: &SimConfig, failed: bool, rng: &mut R) -> bool {
    let (w, h) = cfg.frame_size;
    let mut spec = FrameSpec {
        background: (40, 255),
        blob_intensity: (0, 8),
        salt_fraction: 0.005,
        ..FrameSpec::clear(w, h)
    };
    if failed {
        let coverage: f64 = rng.gen_range(0.15..0.45);
        let bw = ((coverage.sqrt() * w as f64).round() as usize).clamp(1, w);
        let bh = ((coverage.sqrt() * h as f64).round() as usize).clamp(1, h);
        spec.blobs.push(Blob::Rect {
            x: rng.gen_range(0..=w - bw),
            y: rng.gen_range(0..=h - bh),
            w: bw,
            h: bh,
        });
    }
    match synth_frame(&spec, rng).and_then(|(frame, _)| detect_occlusion(&frame, &cfg.occlusion)) {
        Ok(report) => report.occluded,
        Err(e) => {
            log::warn!("camera observation failed: {e}");
            failed
        }
    }
}

/// Distance covered and final speed after `dt` seconds of ramping toward
/// `target` at constant acceleration `a`.
pub(crate) fn advance(v: f64, target: f64, a: f64, dt: f64) -> (f64, f64) {
    let gap = target - v;
    let ramp = gap.abs() / a;
    if dt <= ramp {
        let s = gap.signum() * a;
        (v * dt + 0.5 * s * dt * dt, v + s * dt)
    } else {
        (0.5 * (v + target) * ramp + target * (dt - ramp), target)
    }
}

/// Time needed to cover `d` meters ramping toward `target`.
pub(crate) fn time_to_cover(v: f64, target: f64, a: f64, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let ramp = (target - v).abs() / a;
    let d_ramp = 0.5 * (v + target) * ramp;
    if d <= d_ramp {
        if target >= v {
            (-v + (v * v + 2.0 * a * d).sqrt()) / a
        } else {
            (v - (v * v - 2.0 * a * d).max(0.0).sqrt()) / a
        }
    } else if target > 0.0 {
        ramp + (d - d_ramp) / target
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advance_and_cover_agree() {
        for &(v, target) in &[(0.0, 10.0), (10.0, 4.0), (5.0, 5.0), (12.0, 1.0)] {
            for &d in &[0.5, 3.0, 20.0, 200.0] {
                let t = time_to_cover(v, target, 3.0, d);
                let (dist, _) = advance(v, target, 3.0, t);
                assert!((dist - d).abs() < 1e-6, "v={v} target={target} d={d}: {dist}");
            }
        }
    }

    #[test]
    fn advance_reaches_target() {
        let (d, v) = advance(0.0, 9.0, 3.0, 5.0);
        assert_eq!(v, 9.0);
        assert!((d - (13.5 + 18.0)).abs() < 1e-12);
    }
}
