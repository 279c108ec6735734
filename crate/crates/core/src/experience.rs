//! Experience MDPs harvested from earlier policies and the experience
//! heuristic built on top of them.
//!
//! The experience heuristic of a belief is the cheapest way to reach a goal
//! using two kinds of transitions: real transitions of the experience MDP at
//! their true expected cost, and instantaneous jumps between beliefs priced
//! at `epsilon` times the pairwise heuristic. Jumping straight to a goal is
//! priced at `epsilon * base_heuristic`, so the experience heuristic never
//! exceeds the inflated base heuristic.
//!
//! Goal beliefs of the experience MDP are successors of its edges but not
//! jump targets; every goal jump is covered by the `epsilon *
//! base_heuristic` term.
//!
//! Values of the experience nodes are precomputed once by asynchronous
//! sweeps; the value of any other belief is then one linear pass over the
//! nodes, O(|nodes| * |H|) per query.

use std::collections::{HashMap, VecDeque};

use crate::belief::{base_heuristic, pair_heuristic, successors, BeliefState};
use crate::error::{Error, Result};
use crate::policy::{extend_key, HistoryPolicy};
use crate::solver::Heuristic;
use crate::world::{Action, Scene};

/// Precompute sweeps stop once no value moves by more than this.
pub const SWEEP_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceEdge {
    pub source: usize,
    pub action: Action,
    pub cost: f64,
    /// `(target node, probability)`
    pub branches: Vec<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrecomputeStats {
    pub sweeps: usize,
    /// Node updates over all sweeps.
    pub updates: u64,
}

#[derive(Clone, Debug)]
pub struct ExperienceMdp {
    nodes: Vec<BeliefState>,
    index: HashMap<BeliefState, usize>,
    edges: Vec<ExperienceEdge>,
    values: Vec<f64>,
    epsilon: f64,
}

impl ExperienceMdp {
    fn empty() -> Self {
        ExperienceMdp {
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
            values: Vec::new(),
            epsilon: 1.0,
        }
    }

    fn add_node(&mut self, b: &BeliefState) -> usize {
        if let Some(&i) = self.index.get(b) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(b.clone());
        self.index.insert(b.clone(), i);
        i
    }

    pub fn nodes(&self) -> &[BeliefState] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ExperienceEdge] {
        &self.edges
    }

    pub fn contains(&self, b: &BeliefState) -> bool {
        self.index.contains_key(b)
    }

    /// Precomputed value of an experience node.
    pub fn value(&self, b: &BeliefState) -> Option<f64> {
        self.index.get(b).and_then(|&i| self.values.get(i).copied())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_precomputed(&self) -> bool {
        self.values.len() == self.nodes.len() && !self.nodes.is_empty()
    }

    /// Experience heuristic of an arbitrary belief.
    ///
    /// Panics if [`precompute_values`] has not run.
    pub fn query(&self, scene: &Scene, b: &BeliefState) -> f64 {
        assert!(self.is_precomputed(), "query before precompute_values");
        if b.is_goal() {
            return 0.0;
        }
        let mut best = inflated_base(scene, b, self.epsilon);
        for (node, &value) in self.nodes.iter().zip(&self.values) {
            if value >= best || node.is_goal() || node.hypotheses.len() > b.hypotheses.len() {
                continue;
            }
            if let Some(d) = pair_heuristic(b, node) {
                best = best.min(self.epsilon * f64::from(d) + value);
            }
        }
        best
    }
}

fn inflated_base(scene: &Scene, b: &BeliefState, epsilon: f64) -> f64 {
    base_heuristic(scene, b).map_or(f64::INFINITY, |h| epsilon * f64::from(h))
}

/// Replays `policy` from `start`, following its entries by history and
/// branching on every observation. Histories the policy does not cover become
/// leaves.
pub fn rollout_experience(
    scene: &Scene,
    policy: &HistoryPolicy,
    start: &BeliefState,
) -> ExperienceMdp {
    let mut exp = ExperienceMdp::empty();
    let root = exp.add_node(start);
    let mut seen_edges = std::collections::HashSet::new();
    let mut queue = VecDeque::from([(root, String::new())]);
    while let Some((id, key)) = queue.pop_front() {
        let b = exp.nodes[id].clone();
        if b.is_goal() {
            continue;
        }
        let Some(a) = policy.lookup_key(&key) else {
            continue;
        };
        let succ = successors(scene, &b, a);
        let mut branches = Vec::with_capacity(succ.len());
        for s in succ {
            let child = exp.add_node(&s.belief);
            branches.push((child, s.prob_f64()));
            queue.push_back((child, extend_key(&key, a, s.observation)));
        }
        if seen_edges.insert((id, a)) {
            let cost = crate::belief::expected_cost(scene, &b, a);
            exp.edges.push(ExperienceEdge {
                source: id,
                action: a,
                cost: *cost.numer() as f64 / *cost.denom() as f64,
                branches,
            });
        }
    }
    exp
}

/// The policy's own belief tree, rolled out from the start it was solved for.
pub fn naive_experience(scene: &Scene, policy: &HistoryPolicy) -> ExperienceMdp {
    rollout_experience(scene, policy, &policy.start)
}

/// Fixes the experience value of every node by asynchronous sweeps, starting
/// from `epsilon * base_heuristic`.
pub fn precompute_values(
    scene: &Scene,
    exp: &mut ExperienceMdp,
    epsilon: f64,
) -> Result<PrecomputeStats> {
    if !(1.0..f64::INFINITY).contains(&epsilon) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let n = exp.nodes.len();
    exp.epsilon = epsilon;
    let ceiling: Vec<f64> = exp
        .nodes
        .iter()
        .map(|b| {
            if b.is_goal() {
                0.0
            } else {
                inflated_base(scene, b, epsilon)
            }
        })
        .collect();
    let mut jumps: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, from) in exp.nodes.iter().enumerate() {
        if from.is_goal() {
            continue;
        }
        for (j, to) in exp.nodes.iter().enumerate() {
            if i != j && !to.is_goal() {
                if let Some(d) = pair_heuristic(from, to) {
                    jumps[i].push((j, epsilon * f64::from(d)));
                }
            }
        }
    }
    for (e, edge) in exp.edges.iter().enumerate() {
        out_edges[edge.source].push(e);
    }

    let mut values = ceiling.clone();
    let mut stats = PrecomputeStats::default();
    while stats.sweeps < MAX_SWEEPS {
        stats.sweeps += 1;
        let mut change: f64 = 0.0;
        for i in 0..n {
            if exp.nodes[i].is_goal() {
                continue;
            }
            let mut v = ceiling[i];
            for &(j, c) in &jumps[i] {
                v = v.min(c + values[j]);
            }
            for &e in &out_edges[i] {
                let edge = &exp.edges[e];
                let q = edge.cost
                    + edge
                        .branches
                        .iter()
                        .map(|&(t, p)| p * values[t])
                        .sum::<f64>();
                v = v.min(q);
            }
            stats.updates += 1;
            if v.is_finite() || values[i].is_finite() {
                change = change.max((values[i] - v).abs());
            }
            values[i] = v;
        }
        if change <= SWEEP_TOLERANCE {
            break;
        }
    }
    exp.values = values;
    Ok(stats)
}

/// The experience heuristic as a search heuristic.
#[derive(Clone, Copy)]
pub struct ExperienceHeuristic<'a> {
    pub scene: &'a Scene,
    pub experience: &'a ExperienceMdp,
}

impl Heuristic for ExperienceHeuristic<'_> {
    fn estimate(&self, b: &BeliefState) -> f64 {
        self.experience.query(self.scene, b)
    }
}

pub fn query(scene: &Scene, exp: &ExperienceMdp, b: &BeliefState) -> f64 {
    exp.query(scene, b)
}
