//! Seeded random instances shared by the integration tests.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use num_rational::Ratio;
use touchloc::belief::{check_distinguishable, BeliefState, HypothesisSet};
use touchloc::bench::oracle::oracle_optimal;
use touchloc::world::{
    Action, Cell, Direction, GridWorld, Hypothesis, ObjectModel, Rotation, Scene,
};

pub const SHAPES: [&[(i32, i32)]; 4] = [
    &[(0, 0)],
    &[(0, 0), (1, 0)],
    &[(0, 0), (1, 0), (0, 1)],
    &[(0, 0), (1, 0), (2, 0), (0, 1)],
];

const DIRECTIONS: [Direction; 4] = [
    Direction::PlusX,
    Direction::MinusX,
    Direction::PlusY,
    Direction::MinusY,
];
const ROTATIONS: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

#[derive(Clone, Debug)]
pub struct Instance {
    pub seed: u64,
    pub scene: Scene,
    pub start: BeliefState,
    pub optimal: Ratio<u64>,
}

/// A grid of at most `max_side` x `max_side` cells with a few obstacles, unit
/// moves and sometimes guarded moves, and 2..=`max_h` distinguishable poses
/// clustered in a small window. Rotated poses only when `rotate` is set.
/// Instances the oracle cannot solve within `oracle_cap` beliefs are redrawn.
pub fn random_instance(
    seed: u64,
    max_side: i32,
    max_h: usize,
    rotate: bool,
    oracle_cap: usize,
) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let width = rng.gen_range(4..=max_side);
        let height = rng.gen_range(1..=max_side);
        let shape = if height == 1 {
            SHAPES[..2].choose(&mut rng)
        } else {
            SHAPES.choose(&mut rng)
        };
        let model = ObjectModel::new(shape.unwrap().iter().copied()).unwrap();
        let obstacles: Vec<Cell> = (0..rng.gen_range(0..=2))
            .map(|_| Cell::new(rng.gen_range(0..width), rng.gen_range(0..height)))
            .collect();
        let Ok(world) = GridWorld::new(width, height, obstacles) else {
            continue;
        };
        let mut actions: Vec<Action> = DIRECTIONS.iter().map(|&d| Action::Move(d)).collect();
        if rng.gen_bool(0.5) {
            let max_steps = rng.gen_range(2..=6);
            actions.extend(DIRECTIONS.iter().map(|&direction| Action::GuardedMove {
                direction,
                max_steps,
            }));
        }
        let robot = Cell::new(rng.gen_range(0..width), rng.gen_range(0..height));
        let Ok(scene) = Scene::new(world, model, actions, robot) else {
            continue;
        };
        let n = rng.gen_range(2..=max_h);
        let (wx, wy) = (rng.gen_range(0..width), rng.gen_range(0..height));
        let mut poses = Vec::new();
        for _ in 0..n * 20 {
            if poses.len() == n {
                break;
            }
            let rot = if rotate {
                *ROTATIONS.choose(&mut rng).unwrap()
            } else {
                Rotation::R0
            };
            let h = Hypothesis::new(wx + rng.gen_range(-2..=2), wy + rng.gen_range(-2..=2), rot);
            if poses.contains(&h)
                || scene.check_pose(h, "pose").is_err()
                || scene.model.occupies(h, robot)
            {
                continue;
            }
            poses.push(h);
            let set = HypothesisSet::new(poses.iter().copied()).unwrap();
            if check_distinguishable(&scene, &set).is_err() {
                poses.pop();
            }
        }
        if poses.len() < 2 {
            continue;
        }
        let start = BeliefState::new(robot, HypothesisSet::new(poses).unwrap());
        let Ok(oracle) = oracle_optimal(&scene, &start, oracle_cap) else {
            continue;
        };
        return Instance {
            seed,
            scene,
            start,
            optimal: oracle.value,
        };
    }
}

/// Every belief reachable from `start`, in discovery order.
pub fn reachable(scene: &Scene, start: &BeliefState, cap: usize) -> Vec<BeliefState> {
    let mut seen = std::collections::HashSet::from([start.clone()]);
    let mut order = vec![start.clone()];
    let mut i = 0;
    while i < order.len() && order.len() < cap {
        let b = order[i].clone();
        i += 1;
        if b.is_goal() {
            continue;
        }
        for &a in &scene.actions {
            for br in touchloc::belief::successors(scene, &b, a) {
                if seen.insert(br.belief.clone()) {
                    order.push(br.belief);
                }
            }
        }
    }
    order
}
