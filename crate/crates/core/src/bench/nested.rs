//! Nested uncertainty families: offset boxes of growing extent around a
//! nominal pose, optionally crossed with a growing set of rotations.

use std::ops::RangeInclusive;

use crate::belief::HypothesisSet;
use crate::error::{Error, Result};
use crate::scenario::{load_world, Scenario, ScenarioConfig};
use crate::world::{Hypothesis, Rotation};

/// One uncertainty level: pose offsets along each axis and the number of
/// quarter turns, counted from the nominal rotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NestedLevel {
    pub x: RangeInclusive<i32>,
    pub y: RangeInclusive<i32>,
    pub rotations: u32,
}

impl NestedLevel {
    /// Symmetric box of half-widths `ex`, `ey`.
    pub fn half_width(ex: u32, ey: u32, rotations: u32) -> Self {
        let (ex, ey) = (ex as i32, ey as i32);
        NestedLevel {
            x: -ex..=ex,
            y: -ey..=ey,
            rotations,
        }
    }

    pub fn poses(&self, nominal: Hypothesis) -> Vec<Hypothesis> {
        let base = nominal.rot.degrees() as i64;
        let mut out = Vec::new();
        for dx in self.x.clone() {
            for dy in self.y.clone() {
                for k in 0..i64::from(self.rotations) {
                    let rot = Rotation::from_degrees((base + 90 * k) % 360).expect("quarter turn");
                    out.push(Hypothesis::new(nominal.x + dx, nominal.y + dy, rot));
                }
            }
        }
        out
    }
}

/// Replaces the uncertainty sets of `base` with one set per level. Levels
/// that repeat an earlier set are dropped. Every pose must fit the grid.
pub fn generate_nested_scenarios(
    base: &ScenarioConfig,
    nominal: Hypothesis,
    levels: &[NestedLevel],
) -> Result<Scenario> {
    let mut config = base.clone();
    config.uncertainty_sets.clear();
    config.groundtruth = None;
    let scene = load_world(&config)?.scene;
    let mut sets: Vec<HypothesisSet> = Vec::new();
    for (i, level) in levels.iter().enumerate() {
        if level.rotations == 0 || level.rotations > 4 || level.x.is_empty() || level.y.is_empty() {
            return Err(Error::InvalidParams(format!(
                "level {i} is empty or has more than 4 rotations"
            )));
        }
        let poses = level.poses(nominal);
        for &h in &poses {
            let path = format!("levels[{i}]");
            scene.check_pose(h, &path)?;
            if scene.model.occupies(h, scene.robot_start) {
                return Err(Error::RobotInsideObject {
                    cell: scene.robot_start,
                    hypothesis: h,
                });
            }
        }
        let set = HypothesisSet::new(poses)?;
        if !sets.contains(&set) {
            sets.push(set);
        }
    }
    config.uncertainty_sets = sets
        .iter()
        .map(|s| s.iter().map(|&h| h.into()).collect())
        .collect();
    load_world(&config)
}
