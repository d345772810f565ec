//! Event-driven switching logic: myopic forward switching, planner-driven
//! reverse switching, road-type gating, speed staging, warm-up, and
//! preemption of stale decisions.

mod worker;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Action, ControllerId, RewardWeights, RoadType, SystemState, Track};
use crate::planner::{Interrupt, PlanError, SmdpModel, SwitchPolicy};
use crate::reward::forward_reward;
use crate::surrogate::{BeliefSource, SurrogateError};

pub use worker::{PlanJob, PlanningWorker, PreemptAck, WorkerReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionEventKind {
    SpatialChange,
    TemporalChange,
    ComponentFailure,
    TrafficChange,
    MonitorChange,
}

impl DecisionEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionEventKind::SpatialChange => "spatial",
            DecisionEventKind::TemporalChange => "temporal",
            DecisionEventKind::ComponentFailure => "failure",
            DecisionEventKind::TrafficChange => "traffic",
            DecisionEventKind::MonitorChange => "monitor",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub kind: DecisionEventKind,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwitchError {
    #[error("invalid switch configuration: {0}")]
    Config(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
}

/// Experiment strategies. LBC and AP drive a single controller; the rest
/// differ in how each switching direction is decided and gated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "LBC")]
    Lbc,
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "SA")]
    Sa,
    #[serde(rename = "GS")]
    Gs,
    #[serde(rename = "DS")]
    Ds,
    DMyopic,
    NDMyopic,
    DNonmyopic,
    NDNonmyopic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReversePolicy {
    Never,
    Myopic,
    Planner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyProfile {
    pub initial: ControllerId,
    pub forward: bool,
    pub reverse: ReversePolicy,
    pub domain_rules: bool,
    /// reverse switches wait for v < τ_s under a speed-reduction command
    pub staged: bool,
    /// transitions complete the moment they are decided (no warm-up)
    pub instant: bool,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Lbc,
        Strategy::Ap,
        Strategy::Sa,
        Strategy::Gs,
        Strategy::Ds,
        Strategy::DMyopic,
        Strategy::NDMyopic,
        Strategy::DNonmyopic,
        Strategy::NDNonmyopic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Lbc => "LBC",
            Strategy::Ap => "AP",
            Strategy::Sa => "SA",
            Strategy::Gs => "GS",
            Strategy::Ds => "DS",
            Strategy::DMyopic => "DMyopic",
            Strategy::NDMyopic => "NDMyopic",
            Strategy::DNonmyopic => "DNonmyopic",
            Strategy::NDNonmyopic => "NDNonmyopic",
        }
    }

    pub fn profile(self) -> StrategyProfile {
        use ReversePolicy::*;
        let p = |initial, forward, reverse, domain_rules, staged, instant| StrategyProfile {
            initial,
            forward,
            reverse,
            domain_rules,
            staged,
            instant,
        };
        match self {
            Strategy::Lbc => p(ControllerId::Performant, false, Never, false, false, true),
            Strategy::Ap => p(ControllerId::Safety, false, Never, false, false, true),
            Strategy::Sa => p(ControllerId::Performant, true, Never, false, true, false),
            Strategy::Gs => p(ControllerId::Performant, true, Myopic, false, false, true),
            Strategy::Ds | Strategy::DNonmyopic => p(ControllerId::Performant, true, Planner, true, true, false),
            Strategy::DMyopic => p(ControllerId::Performant, true, Myopic, true, true, false),
            Strategy::NDMyopic => p(ControllerId::Performant, true, Myopic, false, true, false),
            Strategy::NDNonmyopic => p(ControllerId::Performant, true, Planner, false, true, false),
        }
    }

    pub fn needs_surrogate(self) -> bool {
        let p = self.profile();
        p.forward || p.reverse != ReversePolicy::Never
    }

    pub fn uses_planner(self) -> bool {
        self.profile().reverse == ReversePolicy::Planner
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SwitchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| SwitchError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    /// switching speed threshold, m/s
    pub tau_s: f64,
    #[serde(default = "default_warmup")]
    pub warmup_duration: f64,
    #[serde(default = "default_allowed")]
    pub allowed_road_types: BTreeSet<RoadType>,
    #[serde(default = "default_forbidden")]
    pub forbidden_road_types: BTreeSet<RoadType>,
    /// speed command while a reverse switch is pending, as a fraction of τ_s
    #[serde(default = "default_reduced")]
    pub reduced_speed_factor: f64,
}

fn default_warmup() -> f64 {
    2.0
}

fn default_allowed() -> BTreeSet<RoadType> {
    [RoadType::MainRoad, RoadType::Overpass, RoadType::Freeway].into()
}

fn default_forbidden() -> BTreeSet<RoadType> {
    [RoadType::Intersection, RoadType::LaneChange, RoadType::Roundabout].into()
}

fn default_reduced() -> f64 {
    0.9
}

impl SwitchConfig {
    /// Defaults with τ_s at 80% of the safety controller's cruise speed.
    pub fn for_safety_cruise(cruise_speed: f64) -> Self {
        SwitchConfig {
            tau_s: 0.8 * cruise_speed,
            warmup_duration: default_warmup(),
            allowed_road_types: default_allowed(),
            forbidden_road_types: default_forbidden(),
            reduced_speed_factor: default_reduced(),
        }
    }

    pub fn validate(&self) -> Result<(), SwitchError> {
        if !(self.tau_s > 0.0) || !self.tau_s.is_finite() {
            return Err(SwitchError::Config(format!("tau_s must be positive, got {}", self.tau_s)));
        }
        if !(self.warmup_duration >= 0.0) || !self.warmup_duration.is_finite() {
            return Err(SwitchError::Config(format!(
                "warmup_duration must be non-negative, got {}",
                self.warmup_duration
            )));
        }
        if let Some(r) = self.allowed_road_types.intersection(&self.forbidden_road_types).next() {
            return Err(SwitchError::Config(format!("road type {r} is both allowed and forbidden")));
        }
        if !(self.reduced_speed_factor > 0.0 && self.reduced_speed_factor < 1.0) {
            return Err(SwitchError::Config("reduced_speed_factor must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn road_allows_reverse(&self, road: RoadType) -> bool {
        self.allowed_road_types.contains(&road) && !self.forbidden_road_types.contains(&road)
    }
}

/// Simulated decision latency: a fixed selector cost, and a planner cost
/// affine in the iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    pub selector: f64,
    pub planner_base: f64,
    pub planner_per_iteration: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            selector: 0.001,
            planner_base: 0.24,
            planner_per_iteration: 0.00138,
        }
    }
}

impl LatencyModel {
    pub fn planner(&self, iterations: usize) -> f64 {
        self.planner_base + self.planner_per_iteration * iterations as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub gated: bool,
    pub decision_latency: f64,
    /// the selector could not form beliefs and kept the current controller
    pub no_decision: bool,
}

impl Decision {
    fn keep(latency: f64, no_decision: bool) -> Self {
        Decision {
            action: Action::KeepCurrent,
            gated: false,
            decision_latency: latency,
            no_decision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedAction {
    pub action: Action,
    pub policy: SwitchPolicy,
    pub iterations: usize,
}

/// Non-myopic reverse-switch planner consulted while the safety controller drives.
pub trait ReversePlanner {
    /// Iteration budget, for the latency model.
    fn budget(&self) -> usize;
    fn plan(&mut self, state: &SystemState, t_q: f64) -> Result<PlannedAction, PlanError>;
}

/// MCTS over the driving SMDP with a private rng stream.
pub struct SmdpPlanner<'a> {
    pub model: SmdpModel<'a>,
    rng: ChaCha8Rng,
    interrupt: Interrupt,
}

impl<'a> SmdpPlanner<'a> {
    pub fn new(model: SmdpModel<'a>, seed: u64) -> Self {
        SmdpPlanner {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
            interrupt: Interrupt::new(),
        }
    }
}

impl ReversePlanner for SmdpPlanner<'_> {
    fn budget(&self) -> usize {
        self.model.cfg.iterations
    }

    fn plan(&mut self, state: &SystemState, t_q: f64) -> Result<PlannedAction, PlanError> {
        let out = self
            .model
            .plan_reverse_switch(state, t_q, &mut self.rng, &self.interrupt)?;
        Ok(PlannedAction {
            action: out.chosen,
            policy: out.policy,
            iterations: out.iterations,
        })
    }
}

/// Placeholder for strategies that never plan.
pub struct NoPlanner;

impl ReversePlanner for NoPlanner {
    fn budget(&self) -> usize {
        0
    }

    fn plan(&mut self, _: &SystemState, _: f64) -> Result<PlannedAction, PlanError> {
        Err(PlanError::Config("no planner configured"))
    }
}

fn myopic(
    state: &SystemState,
    beliefs: &dyn BeliefSource,
    weights: &RewardWeights,
) -> Result<Action, SurrogateError> {
    let current = forward_reward(&beliefs.belief(state, state.controller)?, weights);
    let other = forward_reward(&beliefs.belief(state, state.controller.other())?, weights);
    Ok(if other > current {
        Action::SwitchController
    } else {
        Action::KeepCurrent
    })
}

/// Decides the action for one event. The performant controller is judged
/// myopically; the safety controller per the strategy's reverse policy.
/// Missing beliefs or a failing planner keep the current controller.
pub fn on_event(
    event: &DecisionEvent,
    state: &SystemState,
    t_q: f64,
    profile: &StrategyProfile,
    weights: &RewardWeights,
    beliefs: &dyn BeliefSource,
    planner: &mut dyn ReversePlanner,
    latency: &LatencyModel,
) -> Decision {
    let result = match (state.controller, profile.reverse) {
        (ControllerId::Performant, _) if profile.forward => {
            myopic(state, beliefs, weights).map_err(|e| e.to_string()).map(|a| (a, latency.selector))
        }
        (ControllerId::Safety, ReversePolicy::Myopic) => {
            myopic(state, beliefs, weights).map_err(|e| e.to_string()).map(|a| (a, latency.selector))
        }
        (ControllerId::Safety, ReversePolicy::Planner) => planner
            .plan(state, t_q)
            .map(|p| (p.action, latency.planner(p.iterations)))
            .map_err(|e| e.to_string()),
        _ => return Decision::keep(0.0, false),
    };
    match result {
        Ok((action, lat)) => Decision {
            action,
            gated: false,
            decision_latency: lat,
            no_decision: false,
        },
        Err(msg) => {
            log::warn!("no decision at t={:.2} ({:?}): {msg}", event.timestamp, event.kind);
            Decision::keep(latency.selector, true)
        }
    }
}

/// Applies road-type rules and speed staging. Forward switches are never gated.
pub fn gate_decision(
    decision: Decision,
    state: &SystemState,
    road: RoadType,
    cfg: &SwitchConfig,
    profile: &StrategyProfile,
) -> Decision {
    let reverse = decision.action.is_switch() && state.controller == ControllerId::Safety;
    if !reverse {
        return Decision { gated: false, ..decision };
    }
    Decision {
        gated: !reverse_gate_open(state.v, road, cfg, profile),
        ..decision
    }
}

fn reverse_gate_open(v: f64, road: RoadType, cfg: &SwitchConfig, profile: &StrategyProfile) -> bool {
    let speed_ok = !profile.staged || v < cfg.tau_s;
    let road_ok = !profile.domain_rules || cfg.road_allows_reverse(road);
    speed_ok && road_ok
}

/// Completion time of a transition whose gate cleared at `gate_cleared_at`.
pub fn warmup_transition(gate_cleared_at: f64, cfg: &SwitchConfig, profile: &StrategyProfile) -> f64 {
    if profile.instant {
        gate_cleared_at
    } else {
        gate_cleared_at + cfg.warmup_duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionOutcome {
    Completed,
    /// a later decision reversed the pending target
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: ControllerId,
    pub to: ControllerId,
    pub requested_at: f64,
    pub gate_cleared_at: Option<f64>,
    pub ended_at: f64,
    pub road_at_end: RoadType,
    pub outcome: TransitionOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub timestamp: f64,
    pub decided_at: f64,
    pub kind: DecisionEventKind,
    pub controller: ControllerId,
    pub action: Action,
    pub gated: bool,
    pub latency: f64,
    pub no_decision: bool,
}

#[derive(Debug, Clone)]
struct PendingTransition {
    from: ControllerId,
    to: ControllerId,
    requested_at: f64,
    gate_cleared_at: Option<f64>,
    completes_at: Option<f64>,
}

impl PendingTransition {
    fn is_reverse(&self) -> bool {
        self.to == ControllerId::Performant
    }
}

#[derive(Debug, Clone)]
struct InFlight {
    event: DecisionEvent,
    snapshot: SystemState,
    t_q: f64,
    ready_at: f64,
}

/// Per-episode switching state machine.
///
/// Events are registered with [`Switcher::notify`]; the decision for the
/// latest event becomes available after its latency, and a newer event
/// discards an older in-flight one. Transitions pass the gate, warm up, and
/// complete via [`Switcher::tick`].
#[derive(Debug, Clone)]
pub struct Switcher {
    pub profile: StrategyProfile,
    pub cfg: SwitchConfig,
    pub latency: LatencyModel,
    pub weights: RewardWeights,
    in_flight: Option<InFlight>,
    pending: Option<PendingTransition>,
    decisions: Vec<DecisionRecord>,
    transitions: Vec<TransitionRecord>,
    preempted: usize,
}

/// Controller change produced by [`Switcher::tick`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flip {
    pub to: ControllerId,
    pub at: f64,
}

impl Switcher {
    pub fn new(profile: StrategyProfile, cfg: SwitchConfig, latency: LatencyModel, weights: RewardWeights) -> Self {
        Switcher {
            profile,
            cfg,
            latency,
            weights,
            in_flight: None,
            pending: None,
            decisions: Vec::new(),
            transitions: Vec::new(),
            preempted: 0,
        }
    }

    pub fn switches_enabled(&self) -> bool {
        self.profile.forward || self.profile.reverse != ReversePolicy::Never
    }

    /// Registers a decision event. Returns the time its decision is ready,
    /// or `None` when the strategy never switches.
    pub fn notify(&mut self, event: DecisionEvent, state: &SystemState, t_q: f64, planner_budget: usize) -> Option<f64> {
        if !self.switches_enabled() {
            return None;
        }
        if self.in_flight.take().is_some() {
            self.preempted += 1;
        }
        let planning = state.controller == ControllerId::Safety && self.profile.reverse == ReversePolicy::Planner;
        let latency = if planning {
            self.latency.planner(planner_budget)
        } else {
            self.latency.selector
        };
        let ready_at = event.timestamp + latency;
        self.in_flight = Some(InFlight {
            event,
            snapshot: state.clone(),
            t_q,
            ready_at,
        });
        Some(ready_at)
    }

    pub fn decision_ready_at(&self) -> Option<f64> {
        self.in_flight.as_ref().map(|f| f.ready_at)
    }

    /// Runs the in-flight decision on its event snapshot and applies it to the
    /// pending transition. `state` is the live state at `now`.
    pub fn decide(
        &mut self,
        now: f64,
        state: &SystemState,
        track: &Track,
        beliefs: &dyn BeliefSource,
        planner: &mut dyn ReversePlanner,
    ) -> Option<Decision> {
        let flight = self.in_flight.take()?;
        let mut decision = on_event(
            &flight.event,
            &flight.snapshot,
            flight.t_q,
            &self.profile,
            &self.weights,
            beliefs,
            planner,
            &self.latency,
        );
        if flight.snapshot.controller != state.controller {
            // a transition completed while deciding; the advice is stale
            decision.action = Action::KeepCurrent;
        }
        if decision.action.is_switch() && state.controller == ControllerId::Safety && self.profile.reverse == ReversePolicy::Never {
            decision.action = Action::KeepCurrent;
        }
        let road = track.scene(state.segment_index).road_type;
        decision = gate_decision(decision, state, road, &self.cfg, &self.profile);
        self.decisions.push(DecisionRecord {
            timestamp: flight.event.timestamp,
            decided_at: now,
            kind: flight.event.kind,
            controller: state.controller,
            action: decision.action,
            gated: decision.gated,
            latency: decision.decision_latency,
            no_decision: decision.no_decision,
        });
        let target = decision.action.target(state.controller);
        match self.pending.take() {
            Some(p) if p.to == target => self.pending = Some(p),
            Some(p) => {
                self.transitions.push(TransitionRecord {
                    from: p.from,
                    to: p.to,
                    requested_at: p.requested_at,
                    gate_cleared_at: p.gate_cleared_at,
                    ended_at: now,
                    road_at_end: road,
                    outcome: TransitionOutcome::Superseded,
                });
            }
            None if target != state.controller => {
                self.pending = Some(PendingTransition {
                    from: state.controller,
                    to: target,
                    requested_at: now,
                    gate_cleared_at: None,
                    completes_at: None,
                });
            }
            None => {}
        }
        Some(decision)
    }

    /// Re-evaluates the gate of the pending transition and completes it when
    /// its warm-up has elapsed.
    pub fn tick(&mut self, now: f64, state: &SystemState, track: &Track) -> Option<Flip> {
        let road = track.scene(state.segment_index).road_type;
        let profile = self.profile;
        let p = self.pending.as_mut()?;
        let open = !p.is_reverse() || reverse_gate_open(state.v, road, &self.cfg, &profile);
        if p.gate_cleared_at.is_none() {
            if !open {
                return None;
            }
            p.gate_cleared_at = Some(now);
            p.completes_at = Some(warmup_transition(now, &self.cfg, &profile));
        }
        let due = p.completes_at.is_some_and(|t| now >= t - 1e-9);
        if !due {
            return None;
        }
        if p.is_reverse() && profile.domain_rules && !self.cfg.road_allows_reverse(road) {
            // road turned forbidden during warm-up: hold at the gate again
            p.gate_cleared_at = None;
            p.completes_at = None;
            return None;
        }
        let p = self.pending.take().expect("pending checked above");
        self.transitions.push(TransitionRecord {
            from: p.from,
            to: p.to,
            requested_at: p.requested_at,
            gate_cleared_at: p.gate_cleared_at,
            ended_at: now,
            road_at_end: road,
            outcome: TransitionOutcome::Completed,
        });
        Some(Flip { to: p.to, at: now })
    }

    /// Earliest scheduled completion of the pending transition.
    pub fn completion_due(&self) -> Option<f64> {
        self.pending.as_ref().and_then(|p| p.completes_at)
    }

    /// A pending transition still waiting at the gate.
    pub fn gate_pending(&self) -> bool {
        self.pending.as_ref().is_some_and(|p| p.gate_cleared_at.is_none())
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// Speed cap in force: set while a staged reverse switch is pending.
    pub fn speed_command(&self) -> Option<f64> {
        match &self.pending {
            Some(p) if p.is_reverse() && self.profile.staged => Some(self.cfg.reduced_speed_factor * self.cfg.tau_s),
            _ => None,
        }
    }

    pub fn decisions(&self) -> &[DecisionRecord] {
        &self.decisions
    }

    pub fn transitions(&self) -> &[TransitionRecord] {
        &self.transitions
    }

    pub fn completed_transitions(&self) -> usize {
        self.transitions
            .iter()
            .filter(|t| t.outcome == TransitionOutcome::Completed)
            .count()
    }

    pub fn preempted(&self) -> usize {
        self.preempted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Belief, SceneFeatures};

    struct Fixed([Belief; 2]);

    impl BeliefSource for Fixed {
        fn belief(&self, _: &SystemState, c: ControllerId) -> Result<Belief, SurrogateError> {
            Ok(self.0[c.index()])
        }
    }

    struct Missing;

    impl BeliefSource for Missing {
        fn belief(&self, _: &SystemState, _: ControllerId) -> Result<Belief, SurrogateError> {
            Err(SurrogateError::MissingCluster("Freeway-c0-s0".parse().unwrap()))
        }
    }

    struct Scripted(Action);

    impl ReversePlanner for Scripted {
        fn budget(&self) -> usize {
            500
        }
        fn plan(&mut self, _: &SystemState, _: f64) -> Result<PlannedAction, PlanError> {
            Ok(PlannedAction {
                action: self.0,
                policy: SwitchPolicy::point_mass(self.0),
                iterations: 500,
            })
        }
    }

    fn beliefs(perf: (f64, f64), safe: (f64, f64)) -> Fixed {
        Fixed([
            Belief::new(perf.0, perf.1, perf.0 * 15.0).unwrap(),
            Belief::new(safe.0, safe.1, safe.0 * 15.0).unwrap(),
        ])
    }

    fn ev(t: f64) -> DecisionEvent {
        DecisionEvent {
            kind: DecisionEventKind::ComponentFailure,
            timestamp: t,
        }
    }

    fn track(roads: &[RoadType]) -> Track {
        Track::new(
            "t",
            roads
                .iter()
                .map(|&r| SceneFeatures::new(r, 0.0, false, 100.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn decide_once(strategy: Strategy, b: &dyn BeliefSource, s: &SystemState, planner: &mut dyn ReversePlanner) -> Decision {
        on_event(
            &ev(0.0),
            s,
            20.0,
            &strategy.profile(),
            &RewardWeights::default(),
            b,
            planner,
            &LatencyModel::default(),
        )
    }

    #[test]
    fn performant_switches_when_safety_strictly_better() {
        let s = SystemState::new(1, ControllerId::Performant);
        let d = decide_once(Strategy::Ds, &beliefs((0.9, 0.8), (0.5, 0.0)), &s, &mut NoPlanner);
        assert_eq!(d.action, Action::SwitchController);
        let d = decide_once(Strategy::Ds, &beliefs((0.9, 0.4), (0.5, 0.0)), &s, &mut NoPlanner);
        assert_eq!(d.action, Action::KeepCurrent);
        assert_eq!(d.decision_latency, LatencyModel::default().selector);
    }

    #[test]
    fn missing_cluster_keeps_current() {
        let s = SystemState::new(1, ControllerId::Performant);
        let d = decide_once(Strategy::Ds, &Missing, &s, &mut NoPlanner);
        assert_eq!(d.action, Action::KeepCurrent);
        assert!(d.no_decision);
    }

    #[test]
    fn safety_consults_planner_only_for_planner_strategies() {
        let s = SystemState::new(1, ControllerId::Safety);
        let b = beliefs((0.9, 0.0), (0.5, 0.0));
        let d = decide_once(Strategy::Ds, &b, &s, &mut Scripted(Action::KeepCurrent));
        assert_eq!(d.action, Action::KeepCurrent);
        assert!((d.decision_latency - LatencyModel::default().planner(500)).abs() < 1e-12);
        let d = decide_once(Strategy::Gs, &b, &s, &mut Scripted(Action::KeepCurrent));
        assert_eq!(d.action, Action::SwitchController);
        let d = decide_once(Strategy::Sa, &b, &s, &mut Scripted(Action::SwitchController));
        assert_eq!(d.action, Action::KeepCurrent);
    }

    #[test]
    fn gate_examples() {
        let cfg = SwitchConfig::for_safety_cruise(10.0);
        let profile = Strategy::Ds.profile();
        let switch = Decision {
            action: Action::SwitchController,
            gated: false,
            decision_latency: 0.0,
            no_decision: false,
        };
        let mut s = SystemState::new(1, ControllerId::Safety);
        s.v = 5.0;
        assert!(gate_decision(switch, &s, RoadType::Intersection, &cfg, &profile).gated);
        assert!(!gate_decision(switch, &s, RoadType::Freeway, &cfg, &profile).gated);
        s.v = 9.0;
        assert!(gate_decision(switch, &s, RoadType::Freeway, &cfg, &profile).gated);
        let mut p = SystemState::new(1, ControllerId::Performant);
        p.v = 30.0;
        assert!(!gate_decision(switch, &p, RoadType::Roundabout, &cfg, &profile).gated);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SwitchConfig::for_safety_cruise(10.0);
        assert!(cfg.validate().is_ok());
        cfg.allowed_road_types.insert(RoadType::Intersection);
        assert!(cfg.validate().is_err());
        assert!(SwitchConfig::for_safety_cruise(0.0).validate().is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.as_str()));
        }
        assert!("XX".parse::<Strategy>().is_err());
    }

    fn run_reverse(warmup: f64) -> (Switcher, Vec<Flip>) {
        let t = track(&[RoadType::Freeway, RoadType::Freeway]);
        let mut cfg = SwitchConfig::for_safety_cruise(10.0);
        cfg.warmup_duration = warmup;
        let mut sw = Switcher::new(Strategy::Ds.profile(), cfg, LatencyModel::default(), RewardWeights::default());
        let mut s = SystemState::new(1, ControllerId::Safety);
        s.v = 9.0;
        let ready = sw.notify(ev(9.0), &s, 20.0, 500).unwrap();
        let b = beliefs((0.9, 0.0), (0.5, 0.0));
        let d = sw.decide(ready, &s, &t, &b, &mut Scripted(Action::SwitchController)).unwrap();
        assert!(d.gated);
        assert_eq!(sw.speed_command(), Some(0.9 * 8.0));
        let mut flips = Vec::new();
        let mut now = ready;
        for _ in 0..100 {
            now += 0.1;
            if now >= 10.0 - 1e-9 {
                s.v = 7.0;
            }
            if let Some(f) = sw.tick(now, &s, &t) {
                flips.push(f);
            }
        }
        (sw, flips)
    }

    #[test]
    fn warmup_delays_flip_after_gate_clears() {
        let (sw, flips) = run_reverse(2.0);
        assert_eq!(flips.len(), 1);
        let rec = &sw.transitions()[0];
        let cleared = rec.gate_cleared_at.unwrap();
        assert!((cleared - 10.0).abs() < 0.11);
        assert!((flips[0].at - (cleared + 2.0)).abs() < 1e-6);
        assert_eq!(sw.completed_transitions(), 1);
        assert_eq!(sw.speed_command(), None);
    }

    #[test]
    fn zero_warmup_flips_at_gate_clear() {
        let (sw, flips) = run_reverse(0.0);
        assert_eq!(flips[0].at, sw.transitions()[0].gate_cleared_at.unwrap());
    }

    #[test]
    fn reversed_decision_cancels_pending() {
        let t = track(&[RoadType::Intersection, RoadType::Freeway]);
        let mut sw = Switcher::new(
            Strategy::Ds.profile(),
            SwitchConfig::for_safety_cruise(10.0),
            LatencyModel::default(),
            RewardWeights::default(),
        );
        let s = SystemState::new(1, ControllerId::Safety);
        let b = beliefs((0.9, 0.0), (0.5, 0.0));
        let r = sw.notify(ev(1.0), &s, 20.0, 500).unwrap();
        sw.decide(r, &s, &t, &b, &mut Scripted(Action::SwitchController));
        assert!(sw.gate_pending());
        assert!(sw.tick(r + 0.1, &s, &t).is_none());
        let r = sw.notify(ev(3.0), &s, 20.0, 500).unwrap();
        sw.decide(r, &s, &t, &b, &mut Scripted(Action::KeepCurrent));
        assert!(!sw.has_pending());
        assert_eq!(sw.transitions()[0].outcome, TransitionOutcome::Superseded);
        assert_eq!(sw.completed_transitions(), 0);
    }

    #[test]
    fn newer_event_preempts_in_flight() {
        let mut sw = Switcher::new(
            Strategy::Ds.profile(),
            SwitchConfig::for_safety_cruise(10.0),
            LatencyModel::default(),
            RewardWeights::default(),
        );
        let s = SystemState::new(1, ControllerId::Safety);
        for i in 0..5 {
            sw.notify(ev(i as f64 * 0.1), &s, 20.0, 500);
        }
        assert_eq!(sw.preempted(), 4);
        let t = track(&[RoadType::Freeway]);
        let b = beliefs((0.9, 0.0), (0.5, 0.0));
        let ready = sw.decision_ready_at().unwrap();
        assert!((ready - (0.4 + LatencyModel::default().planner(500))).abs() < 1e-12);
        assert!(sw.decide(ready, &s, &t, &b, &mut Scripted(Action::KeepCurrent)).is_some());
        assert!(sw.decide(ready, &s, &t, &b, &mut Scripted(Action::KeepCurrent)).is_none());
        assert_eq!(sw.decisions().len(), 1);
    }

    #[test]
    fn single_controller_strategies_ignore_events() {
        let mut sw = Switcher::new(
            Strategy::Lbc.profile(),
            SwitchConfig::for_safety_cruise(10.0),
            LatencyModel::default(),
            RewardWeights::default(),
        );
        assert!(sw.notify(ev(0.0), &SystemState::new(1, ControllerId::Performant), 20.0, 0).is_none());
    }
}
