//! RTDP-Bel over the belief MDP.
//!
//! Each trial samples a hypothesis uniformly from the start belief, then
//! descends greedily, backing up every belief it visits and following the
//! branch consistent with the sampled hypothesis until a goal belief.
//! Unvisited beliefs take their value from a pluggable [`Heuristic`].
//!
//! A solve is declared converged once `consecutive_converged_rollouts`
//! trials in a row had no backup residual above `residual_tol` *and* a
//! sweep over every belief reachable under the greedy policy finds no such
//! residual either. The sweep covers branches too unlikely to be sampled in
//! a handful of trials.

use std::collections::{HashMap, VecDeque};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{base_heuristic, check_distinguishable, successors, BeliefState, Observation};
use crate::error::{Error, Result};
use crate::policy::{extend_key, HistoryPolicy, PolicyStats};
use crate::world::{Action, Hypothesis, Scene};

/// Actions whose Q-values differ by less than this are tied.
const TIE_TOLERANCE: f64 = 1e-12;

pub trait Heuristic {
    fn estimate(&self, b: &BeliefState) -> f64;
}

impl<H: Heuristic + ?Sized> Heuristic for &H {
    fn estimate(&self, b: &BeliefState) -> f64 {
        (**self).estimate(b)
    }
}

/// The admissible base heuristic as a [`Heuristic`]; indistinguishable sets
/// are unreachable goals and score `+inf`.
#[derive(Clone, Copy)]
pub struct BaseHeuristic<'a> {
    pub scene: &'a Scene,
}

impl Heuristic for BaseHeuristic<'_> {
    fn estimate(&self, b: &BeliefState) -> f64 {
        base_heuristic(self.scene, b).map_or(f64::INFINITY, f64::from)
    }
}

#[derive(Clone, Copy)]
pub struct Inflated<H> {
    inner: H,
    epsilon: f64,
}

impl<H: Heuristic> Heuristic for Inflated<H> {
    fn estimate(&self, b: &BeliefState) -> f64 {
        self.epsilon * self.inner.estimate(b)
    }
}

/// `b -> epsilon * heuristic(b)`.
pub fn inflate<H: Heuristic>(heuristic: H, epsilon: f64) -> Result<Inflated<H>> {
    if !(1.0..f64::INFINITY).contains(&epsilon) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    Ok(Inflated {
        inner: heuristic,
        epsilon,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Heuristic inflation, also the experience penalty.
    pub epsilon: f64,
    pub residual_tol: f64,
    pub consecutive_converged_rollouts: u32,
    pub backup_budget: u64,
    pub max_rollout_depth: usize,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            epsilon: 1.0,
            residual_tol: 1e-9,
            consecutive_converged_rollouts: 10,
            backup_budget: 10_000_000,
            max_rollout_depth: 10_000,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn with_epsilon(epsilon: f64) -> Self {
        SolverParams {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.0..f64::INFINITY).contains(&self.epsilon) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        if self.residual_tol.is_nan() || self.residual_tol <= 0.0
            || self.consecutive_converged_rollouts == 0
            || self.backup_budget == 0
            || self.max_rollout_depth == 0
        {
            return Err(Error::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub backups: u64,
    pub rollouts: u64,
    pub wall_time_s: f64,
    pub converged: bool,
    pub v_start: f64,
}

impl From<&SolveStats> for PolicyStats {
    fn from(s: &SolveStats) -> Self {
        PolicyStats {
            backups: s.backups,
            rollouts: s.rollouts,
            converged: s.converged,
            v_start: s.v_start,
        }
    }
}

#[derive(Clone, Debug)]
struct Branch {
    node: usize,
    prob: f64,
    observation: Observation,
}

#[derive(Clone, Debug)]
struct Edge {
    cost: f64,
    branches: Box<[Branch]>,
}

#[derive(Clone, Debug)]
struct Node {
    belief: BeliefState,
    value: f64,
    // one edge per action of the scene, in action order
    edges: Option<Box<[Edge]>>,
}

/// Value estimates for every belief touched by a solve, keyed by belief
/// (equivalently by its canonical encoding). Beliefs enter the table with
/// their heuristic value; goal beliefs are pinned at 0.
#[derive(Clone, Debug, Default)]
pub struct ValueTable {
    index: HashMap<BeliefState, usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Backup {
    pub action: usize,
    pub q: f64,
    pub residual: f64,
}

impl ValueTable {
    pub fn new() -> Self {
        ValueTable::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, b: &BeliefState) -> Option<f64> {
        self.index.get(b).map(|&i| self.nodes[i].value)
    }

    pub fn get_encoded(&self, key: &str) -> Option<f64> {
        self.nodes
            .iter()
            .find(|n| n.belief.encode() == key)
            .map(|n| n.value)
    }

    /// `(belief, value)` in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&BeliefState, f64)> {
        self.nodes.iter().map(|n| (&n.belief, n.value))
    }

    fn intern(&mut self, b: &BeliefState, heuristic: &dyn Heuristic) -> usize {
        if let Some(&i) = self.index.get(b) {
            return i;
        }
        let value = if b.is_goal() {
            0.0
        } else {
            heuristic.estimate(b).max(0.0)
        };
        let id = self.nodes.len();
        self.nodes.push(Node {
            belief: b.clone(),
            value,
            edges: None,
        });
        self.index.insert(b.clone(), id);
        id
    }

    fn expand(&mut self, scene: &Scene, heuristic: &dyn Heuristic, id: usize) {
        if self.nodes[id].edges.is_some() {
            return;
        }
        let belief = self.nodes[id].belief.clone();
        let edges: Vec<Edge> = scene
            .actions
            .iter()
            .map(|&a| {
                let succ = successors(scene, &belief, a);
                let cost = succ.iter().map(|s| s.prob_f64() * f64::from(s.cost)).sum();
                let branches = succ
                    .iter()
                    .map(|s| Branch {
                        node: self.intern(&s.belief, heuristic),
                        prob: s.prob_f64(),
                        observation: s.observation,
                    })
                    .collect();
                Edge { cost, branches }
            })
            .collect();
        self.nodes[id].edges = Some(edges.into());
    }

    fn q(&self, edge: &Edge) -> f64 {
        edge.cost
            + edge
                .branches
                .iter()
                .map(|br| br.prob * self.nodes[br.node].value)
                .sum::<f64>()
    }

    /// Greedy action (lowest index among ties) and its Q-value. `None` if
    /// the belief was never expanded.
    fn greedy(&self, id: usize) -> Option<(usize, f64)> {
        let edges = self.nodes[id].edges.as_ref()?;
        let mut best = (0, f64::INFINITY);
        for (i, e) in edges.iter().enumerate() {
            let q = self.q(e);
            if q < best.1 - TIE_TOLERANCE || (i == 0 && q <= best.1) {
                best = (i, q);
            }
        }
        Some(best)
    }

    fn backup_node(&mut self, scene: &Scene, heuristic: &dyn Heuristic, id: usize) -> Backup {
        self.expand(scene, heuristic, id);
        let (action, q) = self.greedy(id).expect("expanded");
        let node = &mut self.nodes[id];
        let residual = (q - node.value).abs();
        node.value = q;
        Backup {
            action,
            q,
            residual,
        }
    }

    fn child_containing(&self, id: usize, action: usize, h: &Hypothesis) -> usize {
        let edges = self.nodes[id].edges.as_ref().expect("expanded");
        edges[action]
            .branches
            .iter()
            .find(|br| self.nodes[br.node].belief.hypotheses.contains(h))
            .expect("branches partition the hypotheses")
            .node
    }
}

/// One Bellman update of `b`; returns the greedy action and its Q-value.
pub fn bellman_backup(
    scene: &Scene,
    table: &mut ValueTable,
    heuristic: &dyn Heuristic,
    b: &BeliefState,
) -> (Action, f64) {
    let id = table.intern(b, heuristic);
    if b.is_goal() {
        return (scene.actions[0], 0.0);
    }
    let backup = table.backup_node(scene, heuristic, id);
    (scene.actions[backup.action], backup.q)
}

#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub scene: &'a Scene,
    pub start: BeliefState,
}

impl<'a> Problem<'a> {
    pub fn new(scene: &'a Scene, start: BeliefState) -> Self {
        Problem { scene, start }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub table: ValueTable,
    pub stats: SolveStats,
}

/// Callback invoked after every backup with `(belief, old value, new value)`.
pub type BackupObserver<'o> = dyn FnMut(&BeliefState, f64, f64) + 'o;

pub fn solve(
    problem: &Problem,
    heuristic: &dyn Heuristic,
    params: &SolverParams,
) -> Result<Solution> {
    solve_observed(problem, heuristic, params, &mut |_, _, _| {})
}

/// Plain RTDP-Bel: the base heuristic inflated by `params.epsilon`.
pub fn solve_rtdp(problem: &Problem, params: &SolverParams) -> Result<Solution> {
    let h = inflate(
        BaseHeuristic {
            scene: problem.scene,
        },
        params.epsilon,
    )?;
    solve(problem, &h, params)
}

pub fn solve_observed(
    problem: &Problem,
    heuristic: &dyn Heuristic,
    params: &SolverParams,
    observer: &mut BackupObserver,
) -> Result<Solution> {
    params.validate()?;
    let clock = Instant::now();
    let scene = problem.scene;
    let mut table = ValueTable::new();
    let mut stats = SolveStats::default();
    let start = table.intern(&problem.start, heuristic);
    if problem.start.is_goal() {
        stats.converged = true;
        return Ok(Solution { table, stats });
    }
    check_distinguishable(scene, &problem.start.hypotheses)?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let hypotheses = problem.start.hypotheses.as_slice();
    let mut quiet = 0u32;

    let mut do_backup = |table: &mut ValueTable, stats: &mut SolveStats, id: usize| {
        if stats.backups >= params.backup_budget {
            return None;
        }
        let old = table.nodes[id].value;
        let b = table.backup_node(scene, heuristic, id);
        stats.backups += 1;
        observer(&table.nodes[id].belief, old, b.q);
        Some(b)
    };

    let exhausted = |table: &ValueTable, mut stats: SolveStats| {
        stats.v_start = table.nodes[start].value;
        stats.wall_time_s = clock.elapsed().as_secs_f64();
        Err(Error::BudgetExhausted(Box::new(stats)))
    };

    loop {
        stats.rollouts += 1;
        let h = hypotheses[rng.gen_range(0..hypotheses.len())];
        let mut id = start;
        let mut depth = 0;
        let mut max_residual: f64 = 0.0;
        while !table.nodes[id].belief.is_goal() && depth < params.max_rollout_depth {
            let Some(b) = do_backup(&mut table, &mut stats, id) else {
                return exhausted(&table, stats);
            };
            max_residual = max_residual.max(b.residual);
            id = table.child_containing(id, b.action, &h);
            depth += 1;
        }

        let reached_goal = table.nodes[id].belief.is_goal();
        if reached_goal && max_residual <= params.residual_tol {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if quiet < params.consecutive_converged_rollouts {
            continue;
        }

        // sweep the greedy graph
        let mut seen = vec![false; table.nodes.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut clean = true;
        while let Some(id) = queue.pop_front() {
            if table.nodes[id].belief.is_goal() {
                continue;
            }
            let Some(b) = do_backup(&mut table, &mut stats, id) else {
                return exhausted(&table, stats);
            };
            clean &= b.residual <= params.residual_tol;
            let edges = table.nodes[id].edges.as_ref().expect("expanded");
            for br in edges[b.action].branches.iter() {
                if br.node >= seen.len() {
                    seen.resize(table.nodes.len(), false);
                }
                if !seen[br.node] {
                    seen[br.node] = true;
                    queue.push_back(br.node);
                }
            }
        }
        if clean {
            break;
        }
        quiet = 0;
    }
    stats.converged = true;
    stats.v_start = table.nodes[start].value;
    stats.wall_time_s = clock.elapsed().as_secs_f64();
    Ok(Solution { table, stats })
}

/// Greedy history policy from a solved table: breadth-first over the belief
/// tree from the start, branching on every observation, stopping at goals.
pub fn extract_history_policy(
    problem: &Problem,
    table: &ValueTable,
    depth_cap: usize,
) -> Result<HistoryPolicy> {
    let scene = problem.scene;
    let mut entries = std::collections::BTreeMap::new();
    let Some(&start) = table.index.get(&problem.start) else {
        return Err(Error::NotConverged(problem.start.encode()));
    };
    // (node, history key, ancestors on this branch)
    let mut queue = VecDeque::from([(start, String::new(), Vec::<usize>::new())]);
    while let Some((id, key, mut path)) = queue.pop_front() {
        let node = &table.nodes[id];
        if node.belief.is_goal() {
            continue;
        }
        if path.contains(&id) || path.len() >= depth_cap {
            return Err(Error::GreedyCycle(node.belief.encode()));
        }
        let (action, _) = table
            .greedy(id)
            .ok_or_else(|| Error::NotConverged(node.belief.encode()))?;
        let a = scene.actions[action];
        entries.insert(key.clone(), a);
        path.push(id);
        let edges = node.edges.as_ref().expect("greedy implies expanded");
        for br in edges[action].branches.iter() {
            queue.push_back((br.node, extend_key(&key, a, br.observation), path.clone()));
        }
    }
    Ok(HistoryPolicy::new(problem.start.clone(), entries))
}
