use std::sync::OnceLock;

use dynsimplex::domain::{ControllerId, Track};
use dynsimplex::reward::infraction_score;
use dynsimplex::sim::benchmark::{default_sim_config, default_surfaces, default_tracks, surrogate_for, HistoryConfig};
use dynsimplex::sim::{run_episode, run_episode_logged, FailureSchedule, LogEvent, SimConfig};
use dynsimplex::surrogate::Surrogate;
use dynsimplex::switcher::{Strategy, TransitionOutcome};

fn surrogate() -> &'static Surrogate {
    static S: OnceLock<Surrogate> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = default_sim_config();
        surrogate_for(&default_tracks(), &cfg.surfaces, cfg.n_cameras, &HistoryConfig::default()).unwrap()
    })
}

fn with_schedule(s: FailureSchedule) -> SimConfig {
    SimConfig {
        failure_schedule: s,
        ..default_sim_config()
    }
}

fn track(i: usize) -> Track {
    default_tracks().swap_remove(i)
}

#[test]
fn same_seed_same_metrics() {
    let cfg = with_schedule(FailureSchedule::Intermittent);
    for strategy in [Strategy::Ds, Strategy::Gs, Strategy::NDMyopic] {
        let a = run_episode(&track(1), strategy, &cfg, Some(surrogate()), 11).unwrap();
        let b = run_episode(&track(1), strategy, &cfg, Some(surrogate()), 11).unwrap();
        assert_eq!(a, b, "{strategy}");
    }
}

#[test]
fn metrics_are_self_consistent() {
    let tracks = default_tracks();
    for schedule in [FailureSchedule::None, FailureSchedule::PermanentAtRandom, FailureSchedule::Intermittent] {
        let cfg = with_schedule(schedule);
        for strategy in Strategy::ALL {
            for seed in 0..3u64 {
                let t = &tracks[seed as usize % tracks.len()];
                let rec = run_episode_logged(t, strategy, &cfg, Some(surrogate()), seed).unwrap();
                let m = &rec.metrics;
                let expected = infraction_score(m.route_completion, m.vehicle_collision, m.object_collision).unwrap();
                assert_eq!(m.infraction, expected);
                let completed = rec
                    .transitions
                    .iter()
                    .filter(|r| r.outcome == TransitionOutcome::Completed)
                    .count();
                assert_eq!(m.switch_count as usize, completed, "{strategy} seed {seed}");
                let collided = m.vehicle_collision || m.object_collision;
                assert_eq!(m.route_completion < 1.0, collided || m.timed_out);
                // segment traversals tile the episode without gaps
                let mut clock = 0.0;
                for s in &m.segments {
                    assert!((s.entered_at - clock).abs() < 1e-9);
                    assert!(s.exited_at >= s.entered_at);
                    clock = s.exited_at;
                }
                if !collided && !m.timed_out {
                    assert_eq!(m.segments.len(), t.len());
                    assert!((clock - m.travel_time).abs() < 1e-6, "{clock} vs {}", m.travel_time);
                }
                let times: Vec<f64> = rec.events.iter().map(LogEvent::time).collect();
                assert!(times.windows(2).all(|w| w[1] >= w[0] - 1e-9));
            }
        }
    }
}

#[test]
fn single_controller_baselines_never_switch() {
    let cfg = with_schedule(FailureSchedule::Intermittent);
    for strategy in [Strategy::Lbc, Strategy::Ap] {
        for seed in 0..4 {
            let m = run_episode(&track(0), strategy, &cfg, None, seed).unwrap();
            assert_eq!(m.switch_count, 0);
            assert!(m.decision_latencies.is_empty());
            if !(m.vehicle_collision || m.object_collision) {
                assert_eq!(m.infraction, 1.0);
            }
        }
    }
}

#[test]
fn dominant_performant_is_never_left() {
    let mut surfaces = default_surfaces();
    for p in surfaces.performant.collision.values_mut() {
        *p = 0.0005;
    }
    surfaces.performant.weather_collision = 0.0;
    surfaces.performant.density_collision = [0.0; 3];
    for p in surfaces.safety.collision.values_mut() {
        *p = 0.01;
    }
    let cfg = SimConfig {
        env: default_sim_config().env,
        ..SimConfig::new(surfaces.clone())
    };
    let tracks = default_tracks();
    let sur = surrogate_for(&tracks, &surfaces, cfg.n_cameras, &HistoryConfig::default()).unwrap();
    for t in &tracks {
        for seed in 0..5 {
            let rec = run_episode_logged(t, Strategy::Ds, &cfg, Some(&sur), seed).unwrap();
            assert_eq!(rec.metrics.switch_count, 0, "{} seed {seed}", t.id);
            assert!(rec.metrics.segments.iter().all(|s| s.controller_at_exit == ControllerId::Performant));
        }
    }
}

#[test]
fn permanent_failure_latches() {
    let cfg = with_schedule(FailureSchedule::PermanentAtRandom);
    let mut onsets = 0;
    for seed in 0..40 {
        let rec = run_episode_logged(&track(2), Strategy::Lbc, &cfg, None, seed).unwrap();
        let ons = rec.events.iter().filter(|e| matches!(e, LogEvent::FailureOnset { .. })).count();
        let clears = rec.events.iter().filter(|e| matches!(e, LogEvent::FailureClear { .. })).count();
        assert!(ons <= 1);
        assert_eq!(clears, 0);
        onsets += ons;
    }
    assert!(onsets > 0, "no permanent failure in 40 episodes");
}

#[test]
fn intermittent_intervals_replay() {
    let cfg = with_schedule(FailureSchedule::Intermittent);
    let mut intervals = 0;
    for seed in 0..20 {
        let rec = run_episode_logged(&track(0), Strategy::Ds, &cfg, Some(surrogate()), seed).unwrap();
        let mut open: Option<f64> = None;
        for e in &rec.events {
            match *e {
                LogEvent::FailureOnset { t, .. } => {
                    assert!(open.is_none(), "onset inside an open interval");
                    open = Some(t);
                }
                LogEvent::FailureClear { t, .. } => {
                    let start = open.take().expect("clear without onset");
                    assert!(t > start);
                    intervals += 1;
                }
                _ => {}
            }
        }
    }
    assert!(intervals > 0);
}

#[test]
fn schedule_none_never_fails() {
    let cfg = with_schedule(FailureSchedule::None);
    for seed in 0..5 {
        let rec = run_episode_logged(&track(2), Strategy::Ds, &cfg, Some(surrogate()), seed).unwrap();
        assert!(!rec.events.iter().any(|e| matches!(e, LogEvent::FailureOnset { .. })));
    }
}
