mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dynsimplex::domain::{Action, Belief, ControllerId, RewardWeights, SystemState, Weather};
use dynsimplex::oracle::{optimal_action, MicroSmdp, MicroState};
use dynsimplex::planner::{mcts_plan, Interrupt, MctsConfig, PlanError};
use dynsimplex::surrogate::{BeliefSource, SurrogateError};
use dynsimplex::switcher::{
    on_event, DecisionEvent, DecisionEventKind, LatencyModel, PlannedAction, ReversePlanner, Strategy,
};

/// Plans on the micro-SMDP; weather index 1 when cloudiness exceeds 50.
struct MicroPlanner {
    smdp: MicroSmdp,
    rng: ChaCha8Rng,
    iterations: usize,
}

fn micro_state(s: &SystemState) -> MicroState {
    MicroState {
        segment: s.segment_index,
        weather: usize::from(s.weather.cloudiness > 50.0),
        density: 0,
        failure: 0,
        controller: s.controller,
        omega: s.switch_count,
    }
}

impl ReversePlanner for MicroPlanner {
    fn budget(&self) -> usize {
        self.iterations
    }

    fn plan(&mut self, state: &SystemState, _: f64) -> Result<PlannedAction, PlanError> {
        let cfg = MctsConfig {
            iterations: self.iterations,
            gamma: self.smdp.gamma(),
            ..MctsConfig::default()
        };
        let out = mcts_plan(&self.smdp, micro_state(state), &cfg, &mut self.rng, &Interrupt::new())?;
        Ok(PlannedAction {
            action: out.chosen,
            policy: out.policy,
            iterations: out.iterations,
        })
    }
}

struct Unused;

impl BeliefSource for Unused {
    fn belief(&self, _: &SystemState, _: ControllerId) -> Result<Belief, SurrogateError> {
        panic!("the reverse planner path must not query myopic beliefs")
    }
}

fn safety_state(segment: usize, cloudy: bool) -> SystemState {
    let mut s = SystemState::new(1, ControllerId::Safety);
    s.segment_index = segment;
    s.weather = Weather::new(if cloudy { 80.0 } else { 20.0 }, 0.0, 0.0);
    s.switch_count = 1;
    s
}

#[test]
fn stays_safe_for_one_scene_then_switches() {
    let smdp = MicroSmdp::load(&common::fixture("micro_smdp.json")).unwrap();
    let now = safety_state(0, true);
    let next = safety_state(1, false);
    assert_eq!(optimal_action(&smdp, &micro_state(&now)).unwrap(), Action::KeepCurrent);
    assert_eq!(optimal_action(&smdp, &micro_state(&next)).unwrap(), Action::SwitchController);

    let mut planner = MicroPlanner {
        smdp,
        rng: ChaCha8Rng::seed_from_u64(1),
        iterations: 500,
    };
    let event = DecisionEvent {
        kind: DecisionEventKind::SpatialChange,
        timestamp: 0.0,
    };
    let latency = LatencyModel::default();
    let profile = Strategy::Ds.profile();
    let weights = RewardWeights::default();
    let d = on_event(&event, &now, 20.0, &profile, &weights, &Unused, &mut planner, &latency);
    assert_eq!(d.action, Action::KeepCurrent);
    assert!(!d.no_decision);
    assert!((d.decision_latency - latency.planner(500)).abs() < 1e-12);
    let d = on_event(&event, &next, 20.0, &profile, &weights, &Unused, &mut planner, &latency);
    assert_eq!(d.action, Action::SwitchController);
}

#[test]
fn planner_failure_keeps_current() {
    let mut planner = dynsimplex::switcher::NoPlanner;
    let d = on_event(
        &DecisionEvent {
            kind: DecisionEventKind::ComponentFailure,
            timestamp: 3.0,
        },
        &safety_state(0, false),
        20.0,
        &Strategy::Ds.profile(),
        &RewardWeights::default(),
        &Unused,
        &mut planner,
        &LatencyModel::default(),
    );
    assert_eq!(d.action, Action::KeepCurrent);
    assert!(d.no_decision);
}
