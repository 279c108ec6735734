//! Myopic touch-based localization.
//!
//! At every step TBL executes the action with the largest expected
//! information gain, measured in bits over uniform beliefs, and ties go to
//! the cheaper action, then to the earlier one. When no action splits the
//! belief, the robot travels along a shortest path of belief-preserving
//! actions to the nearest cell where some action does.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use num_rational::Ratio;

use crate::belief::{expected_cost, successors, BeliefState};
use crate::error::{Error, Result};
use crate::policy::{Evaluation, ExecutionTrace, HypothesisRun};
use crate::world::{Action, Cell, Hypothesis, Outcome, Scene};

pub const DEFAULT_STEP_CAP: usize = 10_000;

const GAIN_TIE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TblParams {
    pub candidate_actions: Vec<Action>,
    pub step_cap: usize,
}

impl TblParams {
    pub fn for_scene(scene: &Scene) -> Self {
        TblParams {
            candidate_actions: scene.actions.clone(),
            step_cap: DEFAULT_STEP_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidate_actions.is_empty() {
            return Err(Error::InvalidParams(
                "TBL needs at least one candidate action".into(),
            ));
        }
        Ok(())
    }
}

/// Entropy reduction of the uniform belief `b` under `a`, in bits.
pub fn info_gain(scene: &Scene, b: &BeliefState, a: Action) -> f64 {
    let n = b.hypotheses.len() as f64;
    let remaining: f64 = successors(scene, b, a)
        .iter()
        .map(|br| br.prob_f64() * (br.count as f64).log2())
        .sum();
    n.log2() - remaining
}

/// Greedy choice at `b`: the best positive-gain action, if any.
pub fn best_action(scene: &Scene, b: &BeliefState, actions: &[Action]) -> Option<Action> {
    let mut best: Option<(f64, Ratio<u64>, Action)> = None;
    for &a in actions {
        let gain = info_gain(scene, b, a);
        if gain <= GAIN_TIE {
            continue;
        }
        let cost = expected_cost(scene, b, a);
        let better = match &best {
            None => true,
            Some((g, c, _)) => gain > g + GAIN_TIE || (gain > g - GAIN_TIE && cost < *c),
        };
        if better {
            best = Some((gain, cost, a));
        }
    }
    best.map(|(_, _, a)| a)
}

/// Outcome of `a` if every hypothesis of `b` agrees on it.
fn shared_outcome(scene: &Scene, b: &BeliefState, r: Cell, a: Action) -> Option<Outcome> {
    let mut hs = b.hypotheses.iter();
    let first = scene.advance(*hs.next()?, r, a);
    hs.all(|&h| scene.advance(h, r, a) == first)
        .then_some(first)
}

/// Cheapest sequence of belief-preserving actions from the robot cell to a
/// cell with a positive-gain action.
fn fallback_path(scene: &Scene, b: &BeliefState, actions: &[Action]) -> Option<Vec<Action>> {
    let mut dist: HashMap<Cell, u64> = HashMap::from([(b.robot, 0)]);
    let mut parent: HashMap<Cell, (Cell, Action)> = HashMap::new();
    let mut heap = BinaryHeap::from([Reverse((0u64, b.robot))]);
    while let Some(Reverse((d, cell))) = heap.pop() {
        if dist[&cell] < d {
            continue;
        }
        let here = BeliefState::new(cell, b.hypotheses.clone());
        if cell != b.robot && best_action(scene, &here, actions).is_some() {
            let mut path = Vec::new();
            let mut at = cell;
            while let Some(&(prev, a)) = parent.get(&at) {
                path.push(a);
                at = prev;
            }
            path.reverse();
            return Some(path);
        }
        for &a in actions {
            let Some(out) = shared_outcome(scene, b, cell, a) else {
                continue;
            };
            let nd = d + u64::from(out.cost);
            if dist.get(&out.r_next).is_none_or(|&old| nd < old) {
                dist.insert(out.r_next, nd);
                parent.insert(out.r_next, (cell, a));
                heap.push(Reverse((nd, out.r_next)));
            }
        }
    }
    None
}

/// Runs TBL against `groundtruth` until the belief is a goal, the step cap is
/// hit or no informative action can be reached.
pub fn run_tbl(
    scene: &Scene,
    start: &BeliefState,
    groundtruth: Hypothesis,
    params: &TblParams,
) -> Result<ExecutionTrace> {
    params.validate()?;
    if !start.hypotheses.contains(&groundtruth) {
        return Err(Error::UnrealizableTask(format!(
            "groundtruth {groundtruth} is not in the initial hypothesis set"
        )));
    }
    let actions = &params.candidate_actions;
    let mut trace = ExecutionTrace::start(start.clone());
    while !trace.localized && trace.steps.len() < params.step_cap {
        let b = &trace.final_belief;
        let plan = match best_action(scene, b, actions) {
            Some(a) => vec![a],
            None => match fallback_path(scene, b, actions) {
                Some(path) => path,
                None => break,
            },
        };
        for a in plan {
            if trace.steps.len() >= params.step_cap {
                break;
            }
            trace.advance(scene, groundtruth, a)?;
        }
    }
    Ok(trace)
}

/// Average TBL cost over every hypothesis of `start` as groundtruth.
pub fn evaluate_tbl(scene: &Scene, start: &BeliefState, params: &TblParams) -> Result<Evaluation> {
    let mut runs = Vec::with_capacity(start.hypotheses.len());
    for &h in start.hypotheses.iter() {
        let trace = run_tbl(scene, start, h, params)?;
        runs.push(HypothesisRun {
            hypothesis: h,
            cost: trace.total_cost,
            localized: trace.localized,
        });
    }
    let total: u64 = runs.iter().map(|r| r.cost).sum();
    Ok(Evaluation {
        expected_cost: Ratio::new(total, runs.len() as u64),
        success: runs.iter().all(|r| r.localized),
        per_hypothesis: runs,
    })
}
