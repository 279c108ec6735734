//! Scenario documents: one JSON file describes a world, an object, the
//! robot start, the action set and a family of initial uncertainty sets.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefState, HypothesisSet};
use crate::error::{Error, Result};
use crate::world::{Action, Cell, Direction, GridWorld, Hypothesis, ObjectModel, Rotation, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub grid: GridConfig,
    pub object: ObjectConfig,
    pub robot_start: CellConfig,
    pub actions: Vec<ActionConfig>,
    pub uncertainty_sets: Vec<Vec<PoseConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundtruth: Option<PoseConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub width: i32,
    pub height: i32,
    #[serde(default)]
    pub static_obstacles: Vec<CellConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub offsets: Vec<CellConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub x: i32,
    pub y: i32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    pub kind: String,
    pub direction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub x: i32,
    pub y: i32,
    pub rot: i64,
}

impl From<CellConfig> for Cell {
    fn from(c: CellConfig) -> Self {
        Cell::new(c.x, c.y)
    }
}

impl From<Cell> for CellConfig {
    fn from(c: Cell) -> Self {
        CellConfig { x: c.x, y: c.y }
    }
}

impl From<Hypothesis> for PoseConfig {
    fn from(h: Hypothesis) -> Self {
        PoseConfig {
            x: h.x,
            y: h.y,
            rot: i64::from(h.rot.degrees()),
        }
    }
}

impl From<Action> for ActionConfig {
    fn from(a: Action) -> Self {
        ActionConfig {
            kind: a.kind().to_string(),
            direction: a.direction().to_string(),
            max_steps: match a {
                Action::Move(_) => None,
                Action::GuardedMove { max_steps, .. } => Some(max_steps),
            },
        }
    }
}

impl PoseConfig {
    fn to_hypothesis(self, path: &str) -> Result<Hypothesis> {
        let rot = Rotation::from_degrees(self.rot).ok_or_else(|| Error::Document {
            path: format!("{path}.rot"),
            message: format!("rotation must be 0, 90, 180 or 270, got {}", self.rot),
        })?;
        Ok(Hypothesis::new(self.x, self.y, rot))
    }
}

impl ActionConfig {
    fn to_action(&self, path: &str) -> Result<Action> {
        let direction: Direction = self.direction.parse().map_err(|_| Error::Document {
            path: format!("{path}.direction"),
            message: format!("unknown direction `{}`", self.direction),
        })?;
        match (self.kind.as_str(), self.max_steps) {
            ("move", None | Some(1)) => Ok(Action::Move(direction)),
            ("move", Some(_)) => Err(Error::Document {
                path: format!("{path}.max_steps"),
                message: "a move has max_steps 1".into(),
            }),
            ("guarded", Some(0)) => Err(Error::Document {
                path: format!("{path}.max_steps"),
                message: "max_steps must be >= 1".into(),
            }),
            ("guarded", Some(max_steps)) => Ok(Action::GuardedMove {
                direction,
                max_steps,
            }),
            ("guarded", None) => Err(Error::Document {
                path: format!("{path}.max_steps"),
                message: "guarded moves need max_steps".into(),
            }),
            (kind, _) => Err(Error::Document {
                path: format!("{path}.kind"),
                message: format!("unknown action kind `{kind}`"),
            }),
        }
    }
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub scene: Scene,
    /// `(scenario_id, initial hypothesis set)` in document order.
    pub sets: Vec<(String, HypothesisSet)>,
    pub groundtruth: Option<Hypothesis>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ScenarioConfig =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Document {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        load_world(&config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn set(&self, id: &str) -> Result<&HypothesisSet> {
        if let Some((_, set)) = self.sets.iter().find(|(sid, _)| sid == id) {
            return Ok(set);
        }
        id.parse::<usize>()
            .ok()
            .and_then(|i| self.sets.get(i))
            .map(|(_, set)| set)
            .ok_or_else(|| Error::UnknownScenario(id.to_string()))
    }

    pub fn start_belief(&self, set: &HypothesisSet) -> BeliefState {
        BeliefState::new(self.scene.robot_start, set.clone())
    }

    pub fn to_config(&self) -> ScenarioConfig {
        let scene = &self.scene;
        ScenarioConfig {
            name: Some(self.name.clone()),
            grid: GridConfig {
                width: scene.world.width(),
                height: scene.world.height(),
                static_obstacles: scene.world.obstacles().iter().map(|&c| c.into()).collect(),
            },
            object: ObjectConfig {
                offsets: scene
                    .model
                    .offsets()
                    .iter()
                    .map(|&(x, y)| CellConfig { x, y })
                    .collect(),
            },
            robot_start: scene.robot_start.into(),
            actions: scene.actions.iter().map(|&a| a.into()).collect(),
            uncertainty_sets: self
                .sets
                .iter()
                .map(|(_, s)| s.iter().map(|&h| h.into()).collect())
                .collect(),
            groundtruth: self.groundtruth.map(Into::into),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config()).expect("scenario serializes")
    }
}

pub fn scenario_id(name: &str, index: usize) -> String {
    format!("{name}-{index:03}")
}

/// Validates a parsed document into a [`Scenario`].
pub fn load_world(config: &ScenarioConfig) -> Result<Scenario> {
    let world = GridWorld::new(
        config.grid.width,
        config.grid.height,
        config.grid.static_obstacles.iter().map(|&c| c.into()),
    )
    .map_err(|e| Error::Document {
        path: "grid".into(),
        message: e.to_string(),
    })?;
    let model =
        ObjectModel::new(config.object.offsets.iter().map(|c| (c.x, c.y))).map_err(|e| {
            Error::Document {
                path: "object.offsets".into(),
                message: e.to_string(),
            }
        })?;
    let actions = config
        .actions
        .iter()
        .enumerate()
        .map(|(i, a)| a.to_action(&format!("actions[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let scene = Scene::new(world, model, actions, config.robot_start.into()).map_err(|e| {
        Error::Document {
            path: "robot_start".into(),
            message: e.to_string(),
        }
    })?;

    let name = config
        .name
        .clone()
        .unwrap_or_else(|| "scenario".to_string());
    let mut sets = Vec::with_capacity(config.uncertainty_sets.len());
    let mut seen = BTreeSet::new();
    for (i, poses) in config.uncertainty_sets.iter().enumerate() {
        let path = format!("uncertainty_sets[{i}]");
        let mut hs = Vec::with_capacity(poses.len());
        for (j, pose) in poses.iter().enumerate() {
            let p = format!("{path}[{j}]");
            let h = pose.to_hypothesis(&p)?;
            scene.check_pose(h, &p)?;
            if scene.model.occupies(h, scene.robot_start) {
                return Err(Error::Document {
                    path: p,
                    message: format!("pose {h} covers the robot start"),
                });
            }
            hs.push(h);
        }
        let set = HypothesisSet::new(hs.iter().copied()).map_err(|_| Error::Document {
            path: path.clone(),
            message: "empty set".into(),
        })?;
        if set.len() != hs.len() {
            return Err(Error::Document {
                path,
                message: "duplicate pose".into(),
            });
        }
        if !seen.insert(set.clone()) {
            return Err(Error::Document {
                path,
                message: "duplicate uncertainty set".into(),
            });
        }
        sets.push((scenario_id(&name, i), set));
    }
    let groundtruth = match config.groundtruth {
        Some(p) => {
            let h = p.to_hypothesis("groundtruth")?;
            scene.check_pose(h, "groundtruth")?;
            Some(h)
        }
        None => None,
    };
    Ok(Scenario {
        name,
        scene,
        sets,
        groundtruth,
    })
}

/// The W1 corridor scenario with its two nested uncertainty sets.
pub const W1_JSON: &str = r#"{
  "name": "w1",
  "grid": {"width": 10, "height": 1, "static_obstacles": []},
  "object": {"offsets": [{"x": 0, "y": 0}]},
  "robot_start": {"x": 0, "y": 0},
  "actions": [
    {"kind": "move", "direction": "+x"},
    {"kind": "move", "direction": "-x"}
  ],
  "uncertainty_sets": [
    [{"x": 5, "y": 0, "rot": 0}, {"x": 7, "y": 0, "rot": 0}],
    [{"x": 5, "y": 0, "rot": 0}, {"x": 6, "y": 0, "rot": 0}, {"x": 7, "y": 0, "rot": 0}]
  ]
}"#;
