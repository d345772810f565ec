//! Anytime MCTS over a generative model: UCT selection, random rollouts,
//! incremental-mean backups, and the visit-count switching policy.
//!
//! The search engine is generic over [`PlanningModel`] so the same code is
//! exercised against the exact micro-SMDP oracle and the full driving SMDP.

mod smdp;

use std::collections::HashMap;
use std::hash::Hash;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Action;

pub use smdp::{advance_time, Branch, OutcomeKey, PlanState, SmdpModel, Step};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MctsConfig {
    pub iterations: usize,
    pub c_uct: f64,
    pub gamma: f64,
    /// temporal query period, seconds
    pub tau_q: f64,
    pub horizon_scenes: usize,
    pub time_epsilon: f64,
    /// safety net on tree depth in events; the scene horizon normally ends a path first
    pub max_depth: usize,
    /// substitute speed when the surrogate predicts a standstill, m/s
    pub v_min: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            iterations: 500,
            c_uct: std::f64::consts::SQRT_2,
            gamma: 0.9,
            tau_q: 20.0,
            horizon_scenes: 3,
            time_epsilon: 1e-6,
            max_depth: 32,
            v_min: 0.5,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |what: &'static str| Err(PlanError::Config(what));
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if !(self.c_uct >= 0.0) || !self.c_uct.is_finite() {
            return bad("c_uct must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau_q > 0.0) || !self.tau_q.is_finite() {
            return bad("tau_q must be > 0");
        }
        if self.horizon_scenes == 0 {
            return bad("horizon_scenes must be >= 1");
        }
        if !(self.time_epsilon > 0.0) {
            return bad("time_epsilon must be > 0");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be >= 1");
        }
        if !(self.v_min > 0.0) {
            return bad("v_min must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("planning interrupted after {completed} iterations")]
    Aborted { completed: usize },
    #[error("reverse planning requires the safety controller to be driving")]
    NotSafety,
    #[error("invalid planner configuration: {0}")]
    Config(&'static str),
    #[error("model error: {0}")]
    Model(String),
}

/// Generative model the search plans over.
pub trait PlanningModel {
    type State: Clone;
    /// Discretized outcome used to share chance-node children.
    type Key: Eq + Hash + Clone;

    /// Immediate reward R(s, a).
    fn reward(&self, state: &Self::State, action: Action) -> Result<f64, PlanError>;
    fn is_terminal(&self, state: &Self::State) -> bool;
    fn step<R: Rng + ?Sized>(&self, state: &Self::State, action: Action, rng: &mut R) -> Result<Self::State, PlanError>;
    fn outcome_key(&self, state: &Self::State) -> Self::Key;
}

/// Upper confidence bound of one action. Untried actions score +∞.
pub fn ucb(q: f64, n_state: f64, n_action: f64, c: f64) -> f64 {
    if n_action <= 0.0 {
        return f64::INFINITY;
    }
    q + c * (n_state.max(1.0).ln() / n_action).sqrt()
}

/// Cooperative interrupt for an in-flight planning call.
///
/// The flag is polled before every iteration and the completed-iteration
/// count is published after each one, so another thread can observe both.
#[derive(Debug, Default)]
pub struct Interrupt {
    flag: AtomicBool,
    completed: AtomicUsize,
}

impl Interrupt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raise(&self) {
        self.flag.store(true, Ordering::SeqCst);
    }

    pub fn is_raised(&self) -> bool {
        self.flag.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.flag.store(false, Ordering::SeqCst);
        self.completed.store(0, Ordering::SeqCst);
    }

    pub fn completed(&self) -> usize {
        self.completed.load(Ordering::SeqCst)
    }
}

/// π(a|s) over [KeepCurrent, SwitchController].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPolicy(pub [f64; 2]);

impl SwitchPolicy {
    pub fn point_mass(a: Action) -> Self {
        let mut p = [0.0; 2];
        p[a.index()] = 1.0;
        SwitchPolicy(p)
    }

    pub fn prob(&self, a: Action) -> f64 {
        self.0[a.index()]
    }

    /// argmax with ties toward KeepCurrent.
    pub fn best(&self) -> Action {
        if self.0[Action::SwitchController.index()] > self.0[Action::KeepCurrent.index()] {
            Action::SwitchController
        } else {
            Action::KeepCurrent
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchNode<S, K> {
    pub state: S,
    pub visits: u64,
    pub action_visits: [u64; 2],
    pub q: [f64; 2],
    pub children: HashMap<(Action, K), usize>,
    expanded: bool,
}

impl<S, K> SearchNode<S, K> {
    fn new(state: S) -> Self {
        SearchNode {
            state,
            visits: 0,
            action_visits: [0; 2],
            q: [0.0; 2],
            children: HashMap::new(),
            expanded: false,
        }
    }

    pub fn is_expanded(&self) -> bool {
        self.expanded
    }
}

/// Arena-allocated search tree; node 0 is the root.
#[derive(Debug, Clone)]
pub struct SearchTree<S, K> {
    pub nodes: Vec<SearchNode<S, K>>,
}

impl<S, K> SearchTree<S, K> {
    pub fn root(&self) -> &SearchNode<S, K> {
        &self.nodes[0]
    }

    /// Checks N(s) = Σₐ N(s,a) and finite Q at every node.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            let sum: u64 = n.action_visits.iter().sum();
            if sum != n.visits {
                return Err(format!("node {i}: N(s) = {} but sum N(s,a) = {sum}", n.visits));
            }
            if n.q.iter().any(|q| !q.is_finite()) {
                return Err(format!("node {i}: non-finite Q {:?}", n.q));
            }
        }
        Ok(())
    }

    /// Longest root-to-node path, in edges.
    pub fn depth(&self) -> usize
    where
        K: Clone,
    {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            stack.extend(self.nodes[i].children.values().map(|&c| (c, d + 1)));
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutcome<S, K> {
    pub policy: SwitchPolicy,
    pub chosen: Action,
    pub iterations: usize,
    pub tree: SearchTree<S, K>,
}

impl<S, K> PlanOutcome<S, K> {
    pub fn root_q(&self) -> [f64; 2] {
        self.tree.root().q
    }
}

/// Runs up to `cfg.iterations` tree searches from `root`.
///
/// A terminal root has nothing to search; the outcome is then the myopic
/// argmax of R(root, ·) with zero iterations.
pub fn mcts_plan<M: PlanningModel, R: Rng + ?Sized>(
    model: &M,
    root: M::State,
    cfg: &MctsConfig,
    rng: &mut R,
    interrupt: &Interrupt,
) -> Result<PlanOutcome<M::State, M::Key>, PlanError> {
    cfg.validate()?;
    let mut search = Search {
        model,
        cfg,
        tree: SearchTree {
            nodes: vec![SearchNode::new(root)],
        },
    };
    if interrupt.is_raised() {
        return Err(PlanError::Aborted { completed: 0 });
    }
    if model.is_terminal(&search.tree.nodes[0].state) {
        let r = rewards(model, &search.tree.nodes[0].state)?;
        let chosen = if r[1] > r[0] {
            Action::SwitchController
        } else {
            Action::KeepCurrent
        };
        return Ok(PlanOutcome {
            policy: SwitchPolicy::point_mass(chosen),
            chosen,
            iterations: 0,
            tree: search.tree,
        });
    }
    // The root is expanded up front so every iteration backs up through it.
    search.tree.nodes[0].expanded = true;
    for m in 0..cfg.iterations {
        if interrupt.is_raised() {
            return Err(PlanError::Aborted { completed: m });
        }
        search.tree_search(0, 0, rng)?;
        interrupt.completed.store(m + 1, Ordering::SeqCst);
    }
    let root = search.tree.root();
    let n = root.visits as f64;
    let policy = SwitchPolicy(root.action_visits.map(|v| v as f64 / n));
    Ok(PlanOutcome {
        chosen: policy.best(),
        policy,
        iterations: cfg.iterations,
        tree: search.tree,
    })
}

fn rewards<M: PlanningModel>(model: &M, s: &M::State) -> Result<[f64; 2], PlanError> {
    Ok([
        model.reward(s, Action::KeepCurrent)?,
        model.reward(s, Action::SwitchController)?,
    ])
}

fn terminal_value<M: PlanningModel>(model: &M, s: &M::State) -> Result<f64, PlanError> {
    let r = rewards(model, s)?;
    Ok(r[0].max(r[1]))
}

/// Uniform-random default policy from `state` to the horizon.
pub fn rollout<M: PlanningModel, R: Rng + ?Sized>(
    model: &M,
    state: &M::State,
    gamma: f64,
    max_steps: usize,
    rng: &mut R,
) -> Result<f64, PlanError> {
    let mut s = state.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..max_steps {
        if model.is_terminal(&s) {
            break;
        }
        let a = if rng.gen_bool(0.5) {
            Action::SwitchController
        } else {
            Action::KeepCurrent
        };
        total += discount * model.reward(&s, a)?;
        discount *= gamma;
        s = model.step(&s, a, rng)?;
    }
    Ok(total + discount * terminal_value(model, &s)?)
}

struct Search<'a, M: PlanningModel> {
    model: &'a M,
    cfg: &'a MctsConfig,
    tree: SearchTree<M::State, M::Key>,
}

impl<M: PlanningModel> Search<'_, M> {
    fn tree_search<R: Rng + ?Sized>(&mut self, idx: usize, depth: usize, rng: &mut R) -> Result<f64, PlanError> {
        let state = self.tree.nodes[idx].state.clone();
        if self.model.is_terminal(&state) || depth >= self.cfg.max_depth {
            return terminal_value(self.model, &state);
        }
        if !self.tree.nodes[idx].expanded {
            self.tree.nodes[idx].expanded = true;
            return rollout(self.model, &state, self.cfg.gamma, self.cfg.max_depth - depth, rng);
        }
        let a = self.select(idx);
        let next = self.model.step(&state, a, rng)?;
        let key = (a, self.model.outcome_key(&next));
        let child = match self.tree.nodes[idx].children.get(&key) {
            Some(&c) => c,
            None => {
                self.tree.nodes.push(SearchNode::new(next));
                let c = self.tree.nodes.len() - 1;
                self.tree.nodes[idx].children.insert(key, c);
                c
            }
        };
        let r = self.model.reward(&state, a)? + self.cfg.gamma * self.tree_search(child, depth + 1, rng)?;
        let node = &mut self.tree.nodes[idx];
        let i = a.index();
        node.action_visits[i] += 1;
        node.q[i] += (r - node.q[i]) / node.action_visits[i] as f64;
        node.visits += 1;
        Ok(r)
    }

    fn select(&self, idx: usize) -> Action {
        let node = &self.tree.nodes[idx];
        let mut best = Action::KeepCurrent;
        let mut best_score = f64::NEG_INFINITY;
        for a in Action::ALL {
            let i = a.index();
            let score = ucb(node.q[i], node.visits as f64, node.action_visits[i] as f64, self.cfg.c_uct);
            // strict comparison keeps the lowest index on ties
            if score > best_score {
                best = a;
                best_score = score;
            }
        }
        best
    }
}
