//! The belief MDP over `(robot cell, hypothesis set)` pairs.
//!
//! Initial uncertainty is uniform and observations are perfect, so every
//! reachable belief is uniform over a subset of the start hypotheses and is
//! stored as that subset. Branch probabilities are the exact ratios
//! `|group| / |H|`.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::world::{differing_cells, Action, Cell, Hypothesis, Outcome, Scene};

/// Sorted, duplicate-free, non-empty set of hypotheses. Cheap to clone.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct HypothesisSet(Arc<[Hypothesis]>);

impl HypothesisSet {
    pub fn new(hypotheses: impl IntoIterator<Item = Hypothesis>) -> Result<Self> {
        let mut v: Vec<Hypothesis> = hypotheses.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(Error::EmptyHypothesisSet);
        }
        Ok(HypothesisSet(v.into()))
    }

    fn from_sorted(v: Vec<Hypothesis>) -> Self {
        debug_assert!(!v.is_empty() && v.windows(2).all(|w| w[0] < w[1]));
        HypothesisSet(v.into())
    }

    pub fn as_slice(&self) -> &[Hypothesis] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, h: &Hypothesis) -> bool {
        self.0.binary_search(h).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hypothesis> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &HypothesisSet) -> bool {
        if self.len() > other.len() {
            return false;
        }
        let mut theirs = other.0.iter();
        'outer: for h in self.0.iter() {
            for g in theirs.by_ref() {
                match g.cmp(h) {
                    std::cmp::Ordering::Less => continue,
                    std::cmp::Ordering::Equal => continue 'outer,
                    std::cmp::Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }

    pub fn intersection_len(&self, other: &HypothesisSet) -> usize {
        self.0.iter().filter(|h| other.contains(h)).count()
    }

    /// `x1,y1,rot1;x2,y2,rot2;...`
    pub fn encode(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|h| h.to_string()).collect();
        parts.join(";")
    }
}

impl Hash for HypothesisSet {
    fn hash<S: Hasher>(&self, state: &mut S) {
        self.0.hash(state)
    }
}

impl fmt::Debug for HypothesisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.encode())
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BeliefState {
    pub robot: Cell,
    pub hypotheses: HypothesisSet,
}

impl BeliefState {
    pub fn new(robot: Cell, hypotheses: HypothesisSet) -> Self {
        BeliefState { robot, hypotheses }
    }

    pub fn is_goal(&self) -> bool {
        self.hypotheses.len() == 1
    }

    /// `r=<x>,<y>|H=<x1>,<y1>,<rot1>;...`
    pub fn encode(&self) -> String {
        format!(
            "r={},{}|H={}",
            self.robot.x,
            self.robot.y,
            self.hypotheses.encode()
        )
    }
}

impl fmt::Debug for BeliefState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl fmt::Display for BeliefState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

pub fn is_goal(b: &BeliefState) -> bool {
    b.is_goal()
}

/// What the robot perceives after an action: where it ended up and whether
/// the attempt ended in contact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Observation {
    pub robot: Cell,
    pub contact: bool,
}

impl Observation {
    /// `<x>,<y>,<c>`
    pub fn encode(self) -> String {
        format!(
            "{},{},{}",
            self.robot.x,
            self.robot.y,
            u8::from(self.contact)
        )
    }
}

impl From<Outcome> for Observation {
    fn from(o: Outcome) -> Self {
        Observation {
            robot: o.r_next,
            contact: o.contact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuccessorBranch {
    pub observation: Observation,
    pub belief: BeliefState,
    /// Number of hypotheses of the parent that produce this observation.
    pub count: usize,
    /// Size of the parent hypothesis set.
    pub total: usize,
    pub cost: u32,
}

impl SuccessorBranch {
    pub fn prob(&self) -> Ratio<u64> {
        Ratio::new(self.count as u64, self.total as u64)
    }

    pub fn prob_f64(&self) -> f64 {
        self.count as f64 / self.total as f64
    }
}

/// Groups the hypotheses of `b` by their outcome under `a`. Branches are
/// ordered by outcome.
pub fn successors(scene: &Scene, b: &BeliefState, a: Action) -> Vec<SuccessorBranch> {
    let mut groups: BTreeMap<Outcome, Vec<Hypothesis>> = BTreeMap::new();
    for &h in b.hypotheses.iter() {
        debug_assert!(!scene.blocked(h, b.robot), "robot inside object at {b}");
        groups
            .entry(scene.advance(h, b.robot, a))
            .or_default()
            .push(h);
    }
    let total = b.hypotheses.len();
    groups
        .into_iter()
        .map(|(outcome, hs)| SuccessorBranch {
            observation: outcome.into(),
            count: hs.len(),
            total,
            cost: outcome.cost,
            // `hs` inherits the sorted order of the parent set
            belief: BeliefState::new(outcome.r_next, HypothesisSet::from_sorted(hs)),
        })
        .collect()
}

pub fn belief_update(
    scene: &Scene,
    b: &BeliefState,
    a: Action,
    z: Observation,
) -> Result<BeliefState> {
    let consistent: Vec<Hypothesis> = b
        .hypotheses
        .iter()
        .copied()
        .filter(|&h| Observation::from(scene.advance(h, b.robot, a)) == z)
        .collect();
    if consistent.is_empty() {
        return Err(Error::UnrealizableTask(format!(
            "no hypothesis of {b} explains observation {} after {a}",
            z.encode()
        )));
    }
    Ok(BeliefState::new(
        z.robot,
        HypothesisSet::from_sorted(consistent),
    ))
}

pub fn expected_cost(scene: &Scene, b: &BeliefState, a: Action) -> Ratio<u64> {
    let total: u64 = b
        .hypotheses
        .iter()
        .map(|&h| u64::from(scene.advance(h, b.robot, a).cost))
        .sum();
    Ratio::new(total, b.hypotheses.len() as u64)
}

/// Lower bound on the cost to localize: walk to the nearest differing cell
/// and make one attempt on it.
pub fn base_heuristic(scene: &Scene, b: &BeliefState) -> Result<u32> {
    if b.is_goal() {
        return Ok(0);
    }
    let hs = b.hypotheses.as_slice();
    differing_cells(&scene.model, hs)
        .into_iter()
        .map(|c| b.robot.manhattan(c).max(1))
        .min()
        .ok_or(Error::IndistinguishableHypotheses(hs[0], hs[1]))
}

/// Jump cost between beliefs; `None` means unreachable (hypotheses are never
/// re-added).
pub fn pair_heuristic(from: &BeliefState, to: &BeliefState) -> Option<u32> {
    to.hypotheses
        .is_subset(&from.hypotheses)
        .then(|| from.robot.manhattan(to.robot))
}

/// Fails with [`Error::IndistinguishableHypotheses`] if two hypotheses of
/// `hypotheses` occupy exactly the same cells.
pub fn check_distinguishable(scene: &Scene, hypotheses: &HypothesisSet) -> Result<()> {
    let mut seen: BTreeMap<Vec<Cell>, Hypothesis> = BTreeMap::new();
    for &h in hypotheses.iter() {
        let mut cells: Vec<Cell> = scene.model.cells(h).collect();
        cells.sort_unstable();
        if let Some(&other) = seen.get(&cells) {
            return Err(Error::IndistinguishableHypotheses(other, h));
        }
        seen.insert(cells, h);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{w1_scene, Direction, Rotation};

    const PX: Action = Action::Move(Direction::PlusX);
    const MX: Action = Action::Move(Direction::MinusX);

    fn h(x: i32) -> Hypothesis {
        Hypothesis::new(x, 0, Rotation::R0)
    }

    fn b(r: i32, xs: &[i32]) -> BeliefState {
        BeliefState::new(
            Cell::new(r, 0),
            HypothesisSet::new(xs.iter().map(|&x| h(x))).unwrap(),
        )
    }

    #[test]
    fn probe_splits_h2() {
        let s = w1_scene();
        let br = successors(&s, &b(4, &[5, 7]), PX);
        assert_eq!(br.len(), 2);
        assert_eq!(
            br[0].observation,
            Observation {
                robot: Cell::new(4, 0),
                contact: true
            }
        );
        assert_eq!(br[0].belief, b(4, &[5]));
        assert_eq!(br[0].prob(), Ratio::new(1, 2));
        assert_eq!(br[0].cost, 1);
        assert_eq!(
            br[1].observation,
            Observation {
                robot: Cell::new(5, 0),
                contact: false
            }
        );
        assert_eq!(br[1].belief, b(5, &[7]));
        assert_eq!(br[1].prob(), Ratio::new(1, 2));
    }

    #[test]
    fn agreeing_hypotheses_give_one_branch() {
        let s = w1_scene();
        let br = successors(&s, &b(0, &[5, 7]), PX);
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].belief, b(1, &[5, 7]));
        assert_eq!((br[0].prob(), br[0].cost), (Ratio::from_integer(1), 1));
        let br = successors(&s, &b(0, &[5, 7]), MX);
        assert_eq!(br.len(), 1);
        assert_eq!(
            br[0].observation,
            Observation {
                robot: Cell::new(0, 0),
                contact: true
            }
        );
        assert_eq!(br[0].belief, b(0, &[5, 7]));
    }

    #[test]
    fn update_filters_hypotheses() {
        let s = w1_scene();
        let contact = Observation {
            robot: Cell::new(4, 0),
            contact: true,
        };
        assert_eq!(
            belief_update(&s, &b(4, &[5, 7]), PX, contact).unwrap(),
            b(4, &[5])
        );
        let free = Observation {
            robot: Cell::new(1, 0),
            contact: false,
        };
        assert_eq!(
            belief_update(&s, &b(0, &[5, 7]), PX, free).unwrap(),
            b(1, &[5, 7])
        );
        assert!(matches!(
            belief_update(&s, &b(4, &[7]), PX, contact),
            Err(Error::UnrealizableTask(_))
        ));
    }

    #[test]
    fn goal_test() {
        assert!(b(0, &[5]).is_goal());
        assert!(!b(0, &[5, 7]).is_goal());
        assert!(!b(0, &[5, 6, 7]).is_goal());
    }

    #[test]
    fn expected_costs() {
        let s = w1_scene();
        let g = Action::GuardedMove {
            direction: Direction::PlusX,
            max_steps: 9,
        };
        assert_eq!(expected_cost(&s, &b(0, &[5, 7]), g), Ratio::from_integer(6));
        assert_eq!(
            expected_cost(&s, &b(0, &[5, 7]), PX),
            Ratio::from_integer(1)
        );
        assert_eq!(
            expected_cost(&s, &b(4, &[5, 7]), PX),
            Ratio::from_integer(1)
        );
    }

    #[test]
    fn heuristics() {
        let s = w1_scene();
        assert_eq!(base_heuristic(&s, &b(0, &[5, 7])).unwrap(), 5);
        assert_eq!(base_heuristic(&s, &b(4, &[5, 7])).unwrap(), 1);
        assert_eq!(base_heuristic(&s, &b(2, &[7])).unwrap(), 0);
        assert_eq!(pair_heuristic(&b(0, &[5, 7]), &b(4, &[5])), Some(4));
        assert_eq!(pair_heuristic(&b(3, &[5, 7]), &b(3, &[5, 7])), Some(0));
        assert_eq!(pair_heuristic(&b(0, &[5]), &b(0, &[5, 7])), None);
    }

    #[test]
    fn identical_footprints_are_indistinguishable() {
        let s = w1_scene();
        let hs = HypothesisSet::new([h(5), Hypothesis::new(5, 0, Rotation::R90)]).unwrap();
        assert!(matches!(
            check_distinguishable(&s, &hs),
            Err(Error::IndistinguishableHypotheses(..))
        ));
        assert!(matches!(
            base_heuristic(&s, &BeliefState::new(Cell::new(0, 0), hs)),
            Err(Error::IndistinguishableHypotheses(..))
        ));
    }

    #[test]
    fn encoding_is_canonical() {
        let one = BeliefState::new(
            Cell::new(1, 2),
            HypothesisSet::new([h(7), h(5), h(7)]).unwrap(),
        );
        assert_eq!(one.encode(), "r=1,2|H=5,0,0;7,0,0");
        assert!(HypothesisSet::new([]).is_err());
    }

    #[test]
    fn subset_walk() {
        let a = HypothesisSet::new([h(1), h(3)]).unwrap();
        let c = HypothesisSet::new([h(1), h(2), h(3)]).unwrap();
        let d = HypothesisSet::new([h(1), h(4)]).unwrap();
        assert!(a.is_subset(&c));
        assert!(a.is_subset(&a));
        assert!(!c.is_subset(&a));
        assert!(!d.is_subset(&c));
        assert_eq!(d.intersection_len(&c), 1);
    }
}
