//! Exact depth-limited expectimax over small, fully tabulated SMDPs.
//!
//! A [`MicroSmdp`] enumerates a handful of segments, weather states, density
//! levels, and failure states. Exogenous transitions do not depend on the
//! action; the action only decides which controller drives next and whether
//! ω increments. Rewards reuse [`reverse_reward`], so values computed here are
//! directly comparable with the MCTS estimates on the same instance.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Action, Belief, ControllerId, RewardWeights};
use crate::planner::{PlanError, PlanningModel};
use crate::reward::reverse_reward;

pub const NODE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("expectimax exceeded the node budget of {0}")]
    BlowUp(u64),
    #[error("state {0:?} lies outside the enumeration")]
    OutOfRange(MicroState),
    #[error("invalid micro-SMDP: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MicroState {
    pub segment: usize,
    pub weather: usize,
    pub density: usize,
    pub failure: usize,
    pub controller: ControllerId,
    pub omega: u32,
}

/// Exogenous part of a state, the key of both tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub segment: usize,
    pub weather: usize,
    #[serde(default)]
    pub density: usize,
    #[serde(default)]
    pub failure: usize,
}

impl MicroState {
    pub fn cell(&self) -> Cell {
        Cell {
            segment: self.segment,
            weather: self.weather,
            density: self.density,
            failure: self.failure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefEntry {
    #[serde(flatten)]
    pub cell: Cell,
    pub controller: ControllerId,
    pub perf: f64,
    pub safety: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    #[serde(flatten)]
    pub cell: Cell,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    #[serde(flatten)]
    pub from: Cell,
    pub outcomes: Vec<Outcome>,
}

/// Serialized form; see [`MicroSmdp::from_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroSmdpSpec {
    pub segments: usize,
    pub weather_states: usize,
    #[serde(default = "one")]
    pub density_levels: usize,
    #[serde(default = "one")]
    pub failure_states: usize,
    #[serde(default)]
    pub weights: RewardWeights,
    pub gamma: f64,
    pub beliefs: Vec<BeliefEntry>,
    pub transitions: Vec<TransitionRow>,
}

fn one() -> usize {
    1
}

/// A validated, indexed micro-SMDP. States on the last segment are terminal.
#[derive(Debug, Clone)]
pub struct MicroSmdp {
    pub spec: MicroSmdpSpec,
    beliefs: HashMap<(Cell, ControllerId), Belief>,
    transitions: HashMap<Cell, Vec<(Cell, f64)>>,
}

impl MicroSmdp {
    pub fn from_spec(spec: MicroSmdpSpec) -> Result<Self, OracleError> {
        let bad = |m: String| Err(OracleError::Invalid(m));
        if spec.segments == 0 || spec.segments > 4 {
            return bad(format!("segments must be in 1..=4, got {}", spec.segments));
        }
        if spec.weather_states == 0 || spec.weather_states > 3 {
            return bad(format!("weather_states must be in 1..=3, got {}", spec.weather_states));
        }
        if spec.density_levels == 0 || spec.density_levels > 2 {
            return bad(format!("density_levels must be in 1..=2, got {}", spec.density_levels));
        }
        if spec.failure_states == 0 || spec.failure_states > 2 {
            return bad(format!("failure_states must be in 1..=2, got {}", spec.failure_states));
        }
        if !(0.0..=1.0).contains(&spec.gamma) {
            return bad(format!("gamma {} outside [0, 1]", spec.gamma));
        }
        spec.weights.validate().map_err(|e| OracleError::Invalid(e.to_string()))?;

        let in_range = |c: &Cell| {
            c.segment < spec.segments
                && c.weather < spec.weather_states
                && c.density < spec.density_levels
                && c.failure < spec.failure_states
        };
        let mut beliefs = HashMap::new();
        for b in &spec.beliefs {
            if !in_range(&b.cell) {
                return bad(format!("belief for out-of-range cell {:?}", b.cell));
            }
            let belief = Belief::new(b.perf, b.safety, b.perf).map_err(|e| OracleError::Invalid(e.to_string()))?;
            if beliefs.insert((b.cell, b.controller), belief).is_some() {
                return bad(format!("duplicate belief for {:?} {}", b.cell, b.controller));
            }
        }
        let mut transitions = HashMap::new();
        for row in &spec.transitions {
            if !in_range(&row.from) || row.from.segment + 1 >= spec.segments {
                return bad(format!("transition row from invalid cell {:?}", row.from));
            }
            let mut sum = 0.0;
            for o in &row.outcomes {
                if !in_range(&o.cell) || !(0.0..=1.0).contains(&o.p) {
                    return bad(format!("bad outcome {o:?} from {:?}", row.from));
                }
                if o.cell.segment != row.from.segment + 1 {
                    return bad(format!("outcome {:?} does not advance one segment", o.cell));
                }
                sum += o.p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("row {:?} sums to {sum}", row.from));
            }
            let outcomes = row.outcomes.iter().map(|o| (o.cell, o.p)).collect();
            if transitions.insert(row.from, outcomes).is_some() {
                return bad(format!("duplicate transition row {:?}", row.from));
            }
        }
        let smdp = MicroSmdp {
            spec,
            beliefs,
            transitions,
        };
        for cell in smdp.cells() {
            for c in [ControllerId::Performant, ControllerId::Safety] {
                if !smdp.beliefs.contains_key(&(cell, c)) {
                    return bad(format!("missing belief for {cell:?} {c}"));
                }
            }
            if cell.segment + 1 < smdp.spec.segments && !smdp.transitions.contains_key(&cell) {
                return bad(format!("missing transition row for {cell:?}"));
            }
        }
        Ok(smdp)
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        Self::from_spec(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Every exogenous cell in enumeration order.
    pub fn cells(&self) -> Vec<Cell> {
        let s = &self.spec;
        let mut out = Vec::new();
        for segment in 0..s.segments {
            for weather in 0..s.weather_states {
                for density in 0..s.density_levels {
                    for failure in 0..s.failure_states {
                        out.push(Cell {
                            segment,
                            weather,
                            density,
                            failure,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    pub fn is_terminal_state(&self, s: &MicroState) -> bool {
        s.segment + 1 >= self.spec.segments
    }

    /// Steps to the end of the chain from `s`.
    pub fn remaining_depth(&self, s: &MicroState) -> usize {
        self.spec.segments.saturating_sub(s.segment + 1)
    }

    fn after(s: &MicroState, a: Action) -> (ControllerId, u32) {
        if a.is_switch() {
            (s.controller.other(), s.omega + 1)
        } else {
            (s.controller, s.omega)
        }
    }

    pub fn immediate_reward(&self, s: &MicroState, a: Action) -> Result<f64, OracleError> {
        let (c, omega) = Self::after(s, a);
        let b = self.beliefs.get(&(s.cell(), c)).ok_or(OracleError::OutOfRange(*s))?;
        Ok(reverse_reward(b, omega, &self.spec.weights))
    }

    /// Successor distribution of taking `a` in `s`.
    pub fn successors(&self, s: &MicroState, a: Action) -> Result<Vec<(MicroState, f64)>, OracleError> {
        let (controller, omega) = Self::after(s, a);
        let row = self.transitions.get(&s.cell()).ok_or(OracleError::OutOfRange(*s))?;
        Ok(row
            .iter()
            .map(|&(c, p)| {
                (
                    MicroState {
                        segment: c.segment,
                        weather: c.weather,
                        density: c.density,
                        failure: c.failure,
                        controller,
                        omega,
                    },
                    p,
                )
            })
            .collect())
    }

    /// Samples a successor of taking `a` in `s`.
    pub fn sample<R: Rng + ?Sized>(&self, s: &MicroState, a: Action, rng: &mut R) -> Result<MicroState, OracleError> {
        let succ = self.successors(s, a)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(next, p) in &succ {
            acc += p;
            if u < acc {
                return Ok(next);
            }
        }
        Ok(succ.iter().rev().find(|(_, p)| *p > 0.0).map(|(n, _)| *n).unwrap_or(succ[0].0))
    }
}

/// Action values Q(state, ·) of exact depth-limited expectimax:
/// V(s, 0) = maxₐ R(s, a), V(s, d) = maxₐ [R(s, a) + γ Σ P(s'|s, a) V(s', d−1)].
/// Depth is also cut at the end of the chain.
pub fn expectimax(smdp: &MicroSmdp, state: &MicroState, depth: usize, gamma: f64) -> Result<[f64; 2], OracleError> {
    let mut budget = NODE_BUDGET;
    q_values(smdp, state, depth, gamma, &mut budget)
}

fn q_values(
    smdp: &MicroSmdp,
    s: &MicroState,
    depth: usize,
    gamma: f64,
    budget: &mut u64,
) -> Result<[f64; 2], OracleError> {
    if *budget == 0 {
        return Err(OracleError::BlowUp(NODE_BUDGET));
    }
    *budget -= 1;
    let mut q = [0.0; 2];
    for a in Action::ALL {
        q[a.index()] = smdp.immediate_reward(s, a)?;
    }
    if depth == 0 || smdp.is_terminal_state(s) {
        return Ok(q);
    }
    for a in Action::ALL {
        let mut future = 0.0;
        for (next, p) in smdp.successors(s, a)? {
            if p == 0.0 {
                continue;
            }
            future += p * value(smdp, &next, depth - 1, gamma, budget)?;
        }
        q[a.index()] += gamma * future;
    }
    Ok(q)
}

fn value(smdp: &MicroSmdp, s: &MicroState, depth: usize, gamma: f64, budget: &mut u64) -> Result<f64, OracleError> {
    let q = q_values(smdp, s, depth, gamma, budget)?;
    Ok(q[0].max(q[1]))
}

/// Optimal action under expectimax, ties toward KeepCurrent.
pub fn optimal_action(smdp: &MicroSmdp, state: &MicroState) -> Result<Action, OracleError> {
    let q = expectimax(smdp, state, smdp.remaining_depth(state), smdp.gamma())?;
    Ok(if q[1] > q[0] {
        Action::SwitchController
    } else {
        Action::KeepCurrent
    })
}

impl PlanningModel for MicroSmdp {
    type State = MicroState;
    type Key = MicroState;

    fn reward(&self, s: &MicroState, a: Action) -> Result<f64, PlanError> {
        self.immediate_reward(s, a).map_err(|e| PlanError::Model(e.to_string()))
    }

    fn is_terminal(&self, s: &MicroState) -> bool {
        self.is_terminal_state(s)
    }

    fn step<R: Rng + ?Sized>(&self, s: &MicroState, a: Action, rng: &mut R) -> Result<MicroState, PlanError> {
        self.sample(s, a, rng).map_err(|e| PlanError::Model(e.to_string()))
    }

    fn outcome_key(&self, s: &MicroState) -> MicroState {
        *s
    }
}
