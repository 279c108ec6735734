//! Exact optimal values.
//!
//! Both solvers work with the scaled value `W(b) = |H(b)| * V(b)`, which is
//! an integer: a successor branch with `k` hypotheses contributes `k` times
//! its step cost plus its own scaled value. Optimal values are `W / |H|`.
//!
//! [`oracle_optimal`] first discovers the reachable beliefs layer by layer,
//! from the largest hypothesis set down: a layer's robot cells are its entry
//! cells plus everything reachable from them by moves that keep every
//! hypothesis. It then solves the layers from the smallest set up. Within a
//! layer the non-splitting moves form a deterministic shortest-path problem
//! whose exits are the splitting actions, and those exits only refer to
//! smaller, already solved layers.
//! [`value_iteration`] is a plain fixpoint over the reachable beliefs that
//! calls the simulator directly.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};

use num_rational::Ratio;

use crate::belief::{check_distinguishable, successors, BeliefState, HypothesisSet};
use crate::error::{Error, Result};
use crate::world::{Cell, Hypothesis, Outcome, Scene};

/// Default limit on the number of reachable beliefs.
pub const DEFAULT_ORACLE_CAP: usize = 5_000_000;

/// Scaled step cost and the `(child layer, child cell)` of every branch.
type Split = (u64, Vec<(usize, Cell)>);

#[derive(Clone, Debug, Default)]
struct Layer {
    index: HashMap<Cell, usize>,
    cells: Vec<Cell>,
    /// Per cell: `(target cell index, scaled cost)` of non-splitting moves.
    moves: Vec<Vec<(usize, u64)>>,
    /// Per cell: splitting actions.
    splits: Vec<Vec<Split>>,
    /// Scaled optimal values, `None` where no goal is reachable.
    w: Vec<Option<u64>>,
}

impl Layer {
    fn add_cell(&mut self, c: Cell) -> (usize, bool) {
        if let Some(&i) = self.index.get(&c) {
            return (i, false);
        }
        let i = self.cells.len();
        self.index.insert(c, i);
        self.cells.push(c);
        (i, true)
    }
}

/// Optimal scaled values of every belief reachable from the start belief.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub start: BeliefState,
    pub value: Ratio<u64>,
    sets: HashMap<HypothesisSet, usize>,
    layers: Vec<Layer>,
}

impl OracleSolution {
    /// Optimal expected cost of a reachable belief; `None` for beliefs that
    /// are unreachable from the start or cannot be localized.
    pub fn value(&self, b: &BeliefState) -> Option<Ratio<u64>> {
        if b.is_goal() {
            return Some(Ratio::from_integer(0));
        }
        let layer = &self.layers[*self.sets.get(&b.hypotheses)?];
        let w = layer.w[*layer.index.get(&b.robot)?]?;
        Some(Ratio::new(w, b.hypotheses.len() as u64))
    }

    pub fn value_f64(&self) -> f64 {
        ratio_f64(self.value)
    }

    /// Number of reachable non-goal beliefs.
    pub fn belief_count(&self) -> usize {
        self.layers.iter().map(|l| l.cells.len()).sum()
    }
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact optimal expected cost of localizing from `start`. Fails with
/// [`Error::BeliefCapExceeded`] beyond `cap` reachable non-goal beliefs.
pub fn oracle_optimal(scene: &Scene, start: &BeliefState, cap: usize) -> Result<OracleSolution> {
    check_distinguishable(scene, &start.hypotheses)?;
    let mut sets: HashMap<HypothesisSet, usize> = HashMap::new();
    let mut hyps: Vec<HypothesisSet> = Vec::new();
    let mut layers: Vec<Layer> = Vec::new();
    if start.is_goal() {
        return Ok(OracleSolution {
            start: start.clone(),
            value: Ratio::from_integer(0),
            sets,
            layers,
        });
    }
    sets.insert(start.hypotheses.clone(), 0);
    hyps.push(start.hypotheses.clone());
    layers.push(Layer::default());
    layers[0].add_cell(start.robot);

    // discovery, largest sets first so every entry cell is known in time
    let mut pending: BinaryHeap<(usize, Reverse<usize>)> =
        BinaryHeap::from([(start.hypotheses.len(), Reverse(0))]);
    let mut total = 0usize;
    let mut order = Vec::new();
    while let Some((_, Reverse(li))) = pending.pop() {
        order.push(li);
        let hs = hyps[li].clone();
        let size = hs.len() as u64;
        let mut layer = std::mem::take(&mut layers[li]);
        let mut queue: VecDeque<usize> = (0..layer.cells.len()).collect();
        while let Some(i) = queue.pop_front() {
            total += 1;
            if total > cap {
                return Err(Error::BeliefCapExceeded(cap));
            }
            let b = BeliefState::new(layer.cells[i], hs.clone());
            let mut moves = Vec::new();
            let mut splits = Vec::new();
            for &a in &scene.actions {
                let branches = successors(scene, &b, a);
                if let [only] = branches.as_slice() {
                    if only.belief.robot != b.robot {
                        let (j, new) = layer.add_cell(only.belief.robot);
                        if new {
                            queue.push_back(j);
                        }
                        moves.push((j, size * u64::from(only.cost)));
                    }
                    continue;
                }
                let mut cost = 0u64;
                let mut children = Vec::with_capacity(branches.len());
                for br in branches {
                    cost += br.count as u64 * u64::from(br.cost);
                    if br.belief.is_goal() {
                        continue;
                    }
                    let ci = *sets.entry(br.belief.hypotheses.clone()).or_insert_with(|| {
                        hyps.push(br.belief.hypotheses.clone());
                        layers.push(Layer::default());
                        pending.push((br.belief.hypotheses.len(), Reverse(hyps.len() - 1)));
                        hyps.len() - 1
                    });
                    layers[ci].add_cell(br.belief.robot);
                    children.push((ci, br.belief.robot));
                }
                splits.push((cost, children));
            }
            layer.moves.push(moves);
            layer.splits.push(splits);
        }
        layers[li] = layer;
    }

    // solve, smallest sets first
    for &li in order.iter().rev() {
        let layer = &layers[li];
        let n = layer.cells.len();
        let mut dist: Vec<Option<u64>> = vec![None; n];
        let mut reverse: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
        for (i, (moves, splits)) in layer.moves.iter().zip(&layer.splits).enumerate() {
            for &(j, c) in moves {
                reverse[j].push((i, c));
            }
            for (cost, children) in splits {
                let exit = children.iter().try_fold(*cost, |t, &(ci, cell)| {
                    let child = &layers[ci];
                    child.w[child.index[&cell]].map(|w| t + w)
                });
                if let Some(e) = exit {
                    dist[i] = Some(dist[i].map_or(e, |d: u64| d.min(e)));
                }
            }
        }
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = dist
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| Reverse((d, i))))
            .collect();
        while let Some(Reverse((d, j))) = heap.pop() {
            if dist[j] != Some(d) {
                continue;
            }
            for &(i, c) in &reverse[j] {
                if dist[i].is_none_or(|old| d + c < old) {
                    dist[i] = Some(d + c);
                    heap.push(Reverse((d + c, i)));
                }
            }
        }
        layers[li].w = dist;
    }

    let w = layers[0].w[0]
        .ok_or_else(|| Error::UnrealizableTask(format!("no policy localizes {start}")))?;
    Ok(OracleSolution {
        start: start.clone(),
        value: Ratio::new(w, start.hypotheses.len() as u64),
        sets,
        layers,
    })
}

/// Optimal values of every belief reachable from `start`, by value iteration
/// from zero over the enumerated belief space. Beliefs that cannot be
/// localized are left out. Fails with
/// [`Error::BeliefCapExceeded`] beyond `cap` beliefs.
pub fn value_iteration(
    scene: &Scene,
    start: &BeliefState,
    cap: usize,
) -> Result<BTreeMap<String, Ratio<u64>>> {
    check_distinguishable(scene, &start.hypotheses)?;
    // (robot, hypotheses) with hypotheses kept as sorted vectors
    type Key = (Cell, Vec<Hypothesis>);
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut beliefs: Vec<Key> = Vec::new();
    // per belief, per action: (sum of count * cost, successor ids)
    let mut actions: Vec<Vec<(u64, Vec<usize>)>> = Vec::new();
    let root: Key = (start.robot, start.hypotheses.as_slice().to_vec());
    index.insert(root.clone(), 0);
    beliefs.push(root);
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let (r, hs) = beliefs[id].clone();
        let mut per_action = Vec::new();
        if hs.len() > 1 {
            for &a in &scene.actions {
                let mut groups: BTreeMap<Outcome, Vec<Hypothesis>> = BTreeMap::new();
                for &h in &hs {
                    groups.entry(scene.simulate(h, r, a)?).or_default().push(h);
                }
                let mut cost = 0u64;
                let mut next = Vec::with_capacity(groups.len());
                for (outcome, group) in groups {
                    cost += group.len() as u64 * u64::from(outcome.cost);
                    let key = (outcome.r_next, group);
                    let child = match index.get(&key) {
                        Some(&c) => c,
                        None => {
                            let c = beliefs.len();
                            if c >= cap {
                                return Err(Error::BeliefCapExceeded(cap));
                            }
                            index.insert(key.clone(), c);
                            beliefs.push(key);
                            queue.push_back(c);
                            c
                        }
                    };
                    next.push(child);
                }
                per_action.push((cost, next));
            }
        }
        if actions.len() <= id {
            actions.resize(id + 1, Vec::new());
        }
        actions[id] = per_action;
    }
    actions.resize(beliefs.len(), Vec::new());

    // An optimal policy visits each belief at most once per hypothesis, so
    // finite scaled values stay below this bound; anything above it never
    // localizes.
    let max_step = actions
        .iter()
        .flatten()
        .map(|(cost, _)| *cost)
        .max()
        .unwrap_or(0);
    let infinite = max_step
        .saturating_mul(beliefs.len() as u64)
        .saturating_add(1);
    let mut w = vec![0u64; beliefs.len()];
    loop {
        let mut changed = false;
        for id in 0..beliefs.len() {
            if actions[id].is_empty() {
                continue;
            }
            let best = actions[id]
                .iter()
                .map(|(cost, next)| next.iter().fold(*cost, |acc, &c| acc.saturating_add(w[c])))
                .min()
                .expect("non-empty action set")
                .min(infinite);
            if best != w[id] {
                w[id] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut values = BTreeMap::new();
    for (id, (r, hs)) in beliefs.into_iter().enumerate() {
        if w[id] >= infinite {
            continue;
        }
        let size = hs.len() as u64;
        let b = BeliefState::new(r, HypothesisSet::new(hs)?);
        values.insert(b.encode(), Ratio::new(w[id], size));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{w1_scene, Rotation};

    fn b(r: i32, xs: &[i32]) -> BeliefState {
        BeliefState::new(
            Cell::new(r, 0),
            HypothesisSet::new(xs.iter().map(|&x| Hypothesis::new(x, 0, Rotation::R0))).unwrap(),
        )
    }

    #[test]
    fn w1_values() {
        let s = w1_scene();
        let h2 = oracle_optimal(&s, &b(0, &[5, 7]), DEFAULT_ORACLE_CAP).unwrap();
        assert_eq!(h2.value, Ratio::from_integer(5));
        assert_eq!(h2.value(&b(4, &[5, 7])), Some(Ratio::from_integer(1)));
        let h3 = oracle_optimal(&s, &b(0, &[5, 6, 7]), DEFAULT_ORACLE_CAP).unwrap();
        assert_eq!(h3.value, Ratio::new(17, 3));
        let goal = oracle_optimal(&s, &b(0, &[5]), DEFAULT_ORACLE_CAP).unwrap();
        assert_eq!(goal.value, Ratio::from_integer(0));
    }

    #[test]
    fn value_iteration_agrees_on_w1() {
        let s = w1_scene();
        for xs in [&[5, 7][..], &[5, 6, 7], &[3, 6, 8, 9], &[5]] {
            let start = b(0, xs);
            let layered = oracle_optimal(&s, &start, DEFAULT_ORACLE_CAP).unwrap();
            let vi = value_iteration(&s, &start, 10_000).unwrap();
            assert_eq!(vi[&start.encode()], layered.value);
            for (key, v) in &vi {
                let (r, h) = key.split_once('|').unwrap();
                let r: Vec<i32> = r[2..].split(',').map(|t| t.parse().unwrap()).collect();
                let hs: Vec<Hypothesis> = h[2..].split(';').map(|t| t.parse().unwrap()).collect();
                let belief =
                    BeliefState::new(Cell::new(r[0], r[1]), HypothesisSet::new(hs).unwrap());
                assert_eq!(layered.value(&belief), Some(*v), "{key}");
            }
        }
    }

    #[test]
    fn indistinguishable_and_cap() {
        let s = w1_scene();
        let start = BeliefState::new(
            Cell::new(0, 0),
            HypothesisSet::new([
                Hypothesis::new(5, 0, Rotation::R0),
                Hypothesis::new(5, 0, Rotation::R90),
            ])
            .unwrap(),
        );
        assert!(matches!(
            oracle_optimal(&s, &start, DEFAULT_ORACLE_CAP),
            Err(Error::IndistinguishableHypotheses(..))
        ));
        assert!(matches!(
            oracle_optimal(&s, &b(0, &[5, 6, 7]), 3),
            Err(Error::BeliefCapExceeded(3))
        ));
        assert!(matches!(
            value_iteration(&s, &b(0, &[5, 6, 7]), 3),
            Err(Error::BeliefCapExceeded(3))
        ));
    }
}
