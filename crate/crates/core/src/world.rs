//! Grid worlds, object models, hypothesis poses and the deterministic
//! guarded-move contact simulation.
//!
//! Given a hypothesis pose every action has exactly one outcome. The grid
//! boundary and static obstacles act as walls known to the robot: touching
//! them yields a contact under every hypothesis and therefore no
//! information. A blocked attempt leaves the robot where it was and costs 1.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn step(self, direction: Direction) -> Cell {
        let (dx, dy) = direction.delta();
        Cell::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Quarter-turn rotation of the object about its anchor (counter-clockwise).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn degrees(self) -> u32 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub fn from_degrees(degrees: i64) -> Option<Rotation> {
        match degrees {
            0 => Some(Rotation::R0),
            90 => Some(Rotation::R90),
            180 => Some(Rotation::R180),
            270 => Some(Rotation::R270),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn apply(self, (x, y): (i32, i32)) -> (i32, i32) {
        match self {
            Rotation::R0 => (x, y),
            Rotation::R90 => (-y, x),
            Rotation::R180 => (-x, -y),
            Rotation::R270 => (y, -x),
        }
    }
}

/// A candidate object pose: anchor cell plus quarter-turn rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hypothesis {
    pub x: i32,
    pub y: i32,
    pub rot: Rotation,
}

impl Hypothesis {
    pub const fn new(x: i32, y: i32, rot: Rotation) -> Self {
        Hypothesis { x, y, rot }
    }

    pub fn anchor(self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.x, self.y, self.rot.degrees())
    }
}

impl FromStr for Hypothesis {
    type Err = Error;

    /// Parses `x,y,rot`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(',').collect();
        let bad = || Error::Parse(format!("expected `x,y,rot`, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let x = parts[0].trim().parse().map_err(|_| bad())?;
        let y = parts[1].trim().parse().map_err(|_| bad())?;
        let deg: i64 = parts[2].trim().parse().map_err(|_| bad())?;
        let rot = Rotation::from_degrees(deg).ok_or_else(bad)?;
        Ok(Hypothesis::new(x, y, rot))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::PlusX,
        Direction::MinusX,
        Direction::PlusY,
        Direction::MinusY,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::PlusX => (1, 0),
            Direction::MinusX => (-1, 0),
            Direction::PlusY => (0, 1),
            Direction::MinusY => (0, -1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::PlusX => "+x",
            Direction::MinusX => "-x",
            Direction::PlusY => "+y",
            Direction::MinusY => "-y",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+x" => Ok(Direction::PlusX),
            "-x" => Ok(Direction::MinusX),
            "+y" => Ok(Direction::PlusY),
            "-y" => Ok(Direction::MinusY),
            _ => Err(Error::Parse(format!("unknown direction `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    /// Single-cell step; blocked attempts leave the robot in place.
    Move(Direction),
    /// Advance up to `max_steps` cells, stopping at the first contact.
    GuardedMove {
        direction: Direction,
        max_steps: u32,
    },
}

impl Action {
    pub fn direction(self) -> Direction {
        match self {
            Action::Move(d) => d,
            Action::GuardedMove { direction, .. } => direction,
        }
    }

    pub fn max_steps(self) -> u32 {
        match self {
            Action::Move(_) => 1,
            Action::GuardedMove { max_steps, .. } => max_steps,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Action::Move(_) => "move",
            Action::GuardedMove { .. } => "guarded",
        }
    }

    /// `<kind>,<dir>,<L>`
    pub fn encode(self) -> String {
        format!("{},{},{}", self.kind(), self.direction(), self.max_steps())
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "expected `<kind>,<dir>,<L>`, got `{s}`"
            )));
        }
        let direction: Direction = parts[1].parse()?;
        let steps: u32 = parts[2]
            .parse()
            .map_err(|_| Error::Parse(format!("bad step count in `{s}`")))?;
        match (parts[0], steps) {
            ("move", 1) => Ok(Action::Move(direction)),
            ("move", _) => Err(Error::Parse(format!("move must have L = 1 in `{s}`"))),
            ("guarded", 0) => Err(Error::Parse(format!("guarded move needs L >= 1 in `{s}`"))),
            ("guarded", max_steps) => Ok(Action::GuardedMove {
                direction,
                max_steps,
            }),
            (kind, _) => Err(Error::Parse(format!("unknown action kind `{kind}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    pub r_next: Cell,
    pub contact: bool,
    pub cost: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridWorld {
    width: i32,
    height: i32,
    obstacles: BTreeSet<Cell>,
    blocked: Vec<bool>,
}

impl GridWorld {
    pub fn new(width: i32, height: i32, obstacles: impl IntoIterator<Item = Cell>) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::InvalidWorld(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        let obstacles: BTreeSet<Cell> = obstacles.into_iter().collect();
        let mut blocked = vec![false; (width * height) as usize];
        for &c in &obstacles {
            if c.x < 0 || c.y < 0 || c.x >= width || c.y >= height {
                return Err(Error::InvalidWorld(format!(
                    "static obstacle {c} outside the grid"
                )));
            }
            blocked[(c.y * width + c.x) as usize] = true;
        }
        Ok(GridWorld {
            width,
            height,
            obstacles,
            blocked,
        })
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn obstacles(&self) -> &BTreeSet<Cell> {
        &self.obstacles
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.contains(c) && self.blocked[(c.y * self.width + c.x) as usize]
    }

    /// Blocked under every hypothesis: outside the grid or a static obstacle.
    pub fn is_wall(&self, c: Cell) -> bool {
        !self.contains(c) || self.blocked[(c.y * self.width + c.x) as usize]
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Cell::new(x, y)))
    }
}

/// Rigid object shape as a set of cells relative to the anchor `(0,0)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectModel {
    offsets: Vec<(i32, i32)>,
    // sorted offsets for each rotation, indexed by `Rotation as usize`
    rotated: [Vec<(i32, i32)>; 4],
}

impl ObjectModel {
    pub fn new(offsets: impl IntoIterator<Item = (i32, i32)>) -> Result<Self> {
        let offsets: Vec<(i32, i32)> = offsets.into_iter().collect();
        if offsets.is_empty() {
            return Err(Error::InvalidWorld("object model has no cells".into()));
        }
        let unique: BTreeSet<_> = offsets.iter().copied().collect();
        if unique.len() != offsets.len() {
            return Err(Error::InvalidWorld(
                "object model has duplicate offsets".into(),
            ));
        }
        let rotated = Rotation::ALL.map(|rot| {
            let mut v: Vec<_> = offsets.iter().map(|&o| rot.apply(o)).collect();
            v.sort_unstable();
            v
        });
        Ok(ObjectModel { offsets, rotated })
    }

    pub fn single_cell() -> Self {
        ObjectModel::new([(0, 0)]).expect("non-empty")
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Cells covered by the object placed at `h`.
    pub fn cells(&self, h: Hypothesis) -> impl Iterator<Item = Cell> + '_ {
        self.rotated[h.rot.index()]
            .iter()
            .map(move |&(dx, dy)| Cell::new(h.x + dx, h.y + dy))
    }

    pub fn occupies(&self, h: Hypothesis, c: Cell) -> bool {
        self.rotated[h.rot.index()]
            .binary_search(&(c.x - h.x, c.y - h.y))
            .is_ok()
    }
}

pub fn occupied(model: &ObjectModel, h: Hypothesis, cell: Cell) -> bool {
    model.occupies(h, cell)
}

/// Everything about a problem except the start belief: the world, the object
/// and the fixed action set.
#[derive(Clone, Debug)]
pub struct Scene {
    pub world: GridWorld,
    pub model: ObjectModel,
    pub actions: Vec<Action>,
    pub robot_start: Cell,
}

impl Scene {
    pub fn new(
        world: GridWorld,
        model: ObjectModel,
        actions: Vec<Action>,
        robot_start: Cell,
    ) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidWorld("action set is empty".into()));
        }
        if actions.iter().any(|a| a.max_steps() == 0) {
            return Err(Error::InvalidWorld(
                "guarded move with max_steps = 0".into(),
            ));
        }
        if world.is_wall(robot_start) {
            return Err(Error::InvalidWorld(format!(
                "robot start {robot_start} is outside the grid or on an obstacle"
            )));
        }
        Ok(Scene {
            world,
            model,
            actions,
            robot_start,
        })
    }

    pub fn blocked(&self, h: Hypothesis, c: Cell) -> bool {
        self.world.is_wall(c) || self.model.occupies(h, c)
    }

    /// Checks that every cell of the object at `h` is inside the grid and off
    /// the static obstacles.
    pub fn check_pose(&self, h: Hypothesis, path: &str) -> Result<()> {
        for c in self.model.cells(h) {
            if !self.world.contains(c) {
                return Err(Error::PoseOutOfBounds {
                    path: path.to_string(),
                    pose: h,
                });
            }
            if self.world.is_obstacle(c) {
                return Err(Error::PoseOnObstacle {
                    path: path.to_string(),
                    pose: h,
                });
            }
        }
        Ok(())
    }

    /// Outcome of `a` from `r` when the object sits at `h`.
    pub fn simulate(&self, h: Hypothesis, r: Cell, a: Action) -> Result<Outcome> {
        if self.blocked(h, r) {
            return Err(Error::RobotInsideObject {
                cell: r,
                hypothesis: h,
            });
        }
        Ok(self.advance(h, r, a))
    }

    /// Unchecked variant of [`Scene::simulate`]; `r` must be free under `h`.
    pub(crate) fn advance(&self, h: Hypothesis, r: Cell, a: Action) -> Outcome {
        let direction = a.direction();
        let mut at = r;
        let mut moved = 0;
        while moved < a.max_steps() {
            let next = at.step(direction);
            if self.blocked(h, next) {
                return Outcome {
                    r_next: at,
                    contact: true,
                    cost: moved + 1,
                };
            }
            at = next;
            moved += 1;
        }
        Outcome {
            r_next: at,
            contact: false,
            cost: moved.max(1),
        }
    }

    /// Cells a robot at `r` attempts to enter while executing `a` under `h`,
    /// including the blocked cell that ended the attempt.
    pub fn swept_cells(&self, h: Hypothesis, r: Cell, a: Action) -> Vec<Cell> {
        let out = self.advance(h, r, a);
        let n = r.manhattan(out.r_next) + u32::from(out.contact);
        let mut cells = Vec::with_capacity(n as usize);
        let mut at = r;
        for _ in 0..n {
            at = at.step(a.direction());
            cells.push(at);
        }
        cells
    }
}

pub fn simulate_action(scene: &Scene, h: Hypothesis, r: Cell, a: Action) -> Result<Outcome> {
    scene.simulate(h, r, a)
}

/// Cells whose occupancy is not the same under every hypothesis of `hypotheses`.
pub fn differing_cells(model: &ObjectModel, hypotheses: &[Hypothesis]) -> BTreeSet<Cell> {
    let mut counts: BTreeMap<Cell, usize> = BTreeMap::new();
    for &h in hypotheses {
        for c in model.cells(h) {
            *counts.entry(c).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n < hypotheses.len())
        .map(|(c, _)| c)
        .collect()
}

/// The 10x1 corridor used throughout the tests: single-cell object, robot at
/// the left end, unit moves along x.
pub fn w1_scene() -> Scene {
    Scene::new(
        GridWorld::new(10, 1, []).expect("valid grid"),
        ObjectModel::single_cell(),
        vec![
            Action::Move(Direction::PlusX),
            Action::Move(Direction::MinusX),
        ],
        Cell::new(0, 0),
    )
    .expect("valid scene")
}
