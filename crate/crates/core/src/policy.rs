//! History-indexed policies.
//!
//! A policy maps action/observation histories to actions rather than beliefs
//! to actions, so a policy computed for one start belief can be replayed from
//! another one whose histories coincide.

use std::collections::BTreeMap;

use num_rational::Ratio;

use crate::belief::{belief_update, successors, BeliefState, Observation};
use crate::error::{Error, Result};
use crate::world::{Action, Cell, Hypothesis, Outcome, Scene};

/// Depth limit for closed-loop evaluation and execution.
pub const DEFAULT_DEPTH_CAP: usize = 10_000;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct History {
    pub steps: Vec<(Action, Observation)>,
}

impl History {
    pub fn new() -> Self {
        History::default()
    }

    pub fn push(&mut self, a: Action, z: Observation) {
        self.steps.push((a, z));
    }

    pub fn encode(&self) -> String {
        let mut key = String::new();
        for &(a, z) in &self.steps {
            key = extend_key(&key, a, z);
        }
        key
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut history = History::new();
        if s.is_empty() {
            return Ok(history);
        }
        for step in s.split(';') {
            let bad = || Error::Parse(format!("malformed history step `{step}`"));
            let (a, z) = step.split_once('/').ok_or_else(bad)?;
            let a: Action = a.strip_prefix("a:").ok_or_else(bad)?.parse()?;
            let z: Vec<&str> = z.strip_prefix("z:").ok_or_else(bad)?.split(',').collect();
            if z.len() != 3 {
                return Err(bad());
            }
            let x = z[0].parse().map_err(|_| bad())?;
            let y = z[1].parse().map_err(|_| bad())?;
            let contact = match z[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            history.push(
                a,
                Observation {
                    robot: Cell::new(x, y),
                    contact,
                },
            );
        }
        Ok(history)
    }
}

/// Appends one `a:<action>/z:<observation>` step to an encoded history.
pub fn extend_key(key: &str, a: Action, z: Observation) -> String {
    let step = format!("a:{}/z:{}", a.encode(), z.encode());
    if key.is_empty() {
        step
    } else {
        format!("{key};{step}")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyStats {
    pub backups: u64,
    pub rollouts: u64,
    pub converged: bool,
    pub v_start: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryPolicy {
    pub scenario_id: String,
    pub start: BeliefState,
    pub epsilon: f64,
    pub solver: String,
    pub stats: PolicyStats,
    entries: BTreeMap<String, Action>,
}

impl HistoryPolicy {
    pub fn new(start: BeliefState, entries: BTreeMap<String, Action>) -> Self {
        HistoryPolicy {
            scenario_id: String::new(),
            start,
            epsilon: 1.0,
            solver: String::new(),
            stats: PolicyStats::default(),
            entries,
        }
    }

    pub fn lookup(&self, history: &History) -> Option<Action> {
        self.lookup_key(&history.encode())
    }

    pub fn lookup_key(&self, key: &str) -> Option<Action> {
        self.entries.get(key).copied()
    }

    /// Entries in canonical (sorted) key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, Action)> {
        self.entries.iter().map(|(k, &a)| (k.as_str(), a))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn lookup(policy: &HistoryPolicy, history: &History) -> Option<Action> {
    policy.lookup(history)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypothesisRun {
    pub hypothesis: Hypothesis,
    pub cost: u64,
    pub localized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub expected_cost: Ratio<u64>,
    pub success: bool,
    /// Sorted by hypothesis.
    pub per_hypothesis: Vec<HypothesisRun>,
}

impl Evaluation {
    pub fn expected_cost_f64(&self) -> f64 {
        *self.expected_cost.numer() as f64 / *self.expected_cost.denom() as f64
    }
}

/// Expected cost of following `policy` from `start`, computed by walking
/// the policy's belief tree. A branch that ends in a non-goal belief with no
/// policy entry counts as a failure and contributes the cost of its prefix.
pub fn evaluate_exact(
    scene: &Scene,
    policy: &HistoryPolicy,
    start: &BeliefState,
    depth_cap: usize,
) -> Evaluation {
    let mut runs = Vec::with_capacity(start.hypotheses.len());
    let mut stack = vec![(start.clone(), String::new(), 0u64, 0usize)];
    while let Some((b, key, cost, depth)) = stack.pop() {
        let action = if b.is_goal() || depth >= depth_cap {
            None
        } else {
            policy.lookup_key(&key)
        };
        let Some(a) = action else {
            let localized = b.is_goal();
            runs.extend(b.hypotheses.iter().map(|&hypothesis| HypothesisRun {
                hypothesis,
                cost,
                localized,
            }));
            continue;
        };
        for branch in successors(scene, &b, a) {
            stack.push((
                branch.belief,
                extend_key(&key, a, branch.observation),
                cost + u64::from(branch.cost),
                depth + 1,
            ));
        }
    }
    runs.sort_by_key(|r| r.hypothesis);
    let total: u64 = runs.iter().map(|r| r.cost).sum();
    Evaluation {
        expected_cost: Ratio::new(total, runs.len() as u64),
        success: runs.iter().all(|r| r.localized),
        per_hypothesis: runs,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub belief: BeliefState,
    pub action: Action,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
    pub total_cost: u64,
    pub final_belief: BeliefState,
    pub localized: bool,
}

impl ExecutionTrace {
    pub(crate) fn start(b: BeliefState) -> Self {
        ExecutionTrace {
            steps: Vec::new(),
            total_cost: 0,
            localized: b.is_goal(),
            final_belief: b,
        }
    }

    /// Simulates `a` under `groundtruth`, records the step and filters the
    /// belief with the real observation.
    pub(crate) fn advance(
        &mut self,
        scene: &Scene,
        groundtruth: Hypothesis,
        a: Action,
    ) -> Result<Observation> {
        let b = &self.final_belief;
        let outcome = scene.simulate(groundtruth, b.robot, a)?;
        let z = Observation::from(outcome);
        let next = belief_update(scene, b, a, z)?;
        self.steps.push(TraceStep {
            belief: b.clone(),
            action: a,
            outcome,
        });
        self.total_cost += u64::from(outcome.cost);
        self.localized = next.is_goal();
        self.final_belief = next;
        Ok(z)
    }
}

/// Runs `policy` in closed loop against `groundtruth`, stopping at a goal
/// belief, at a history the policy does not cover, or at the depth cap.
pub fn execute(
    scene: &Scene,
    policy: &HistoryPolicy,
    groundtruth: Hypothesis,
    depth_cap: usize,
) -> Result<ExecutionTrace> {
    if !policy.start.hypotheses.contains(&groundtruth) {
        return Err(Error::UnrealizableTask(format!(
            "groundtruth {groundtruth} is not in the initial hypothesis set"
        )));
    }
    let mut trace = ExecutionTrace::start(policy.start.clone());
    let mut key = String::new();
    while !trace.localized && trace.steps.len() < depth_cap {
        let Some(a) = policy.lookup_key(&key) else {
            break;
        };
        let z = trace.advance(scene, groundtruth, a)?;
        key = extend_key(&key, a, z);
    }
    Ok(trace)
}
