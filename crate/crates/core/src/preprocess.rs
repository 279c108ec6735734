//! Database construction over a family of start beliefs.
//!
//! Problems are solved from the smallest uncertainty upwards; each one is
//! solved with the experience heuristic built from the stored policy whose
//! start hypotheses overlap it most.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::belief::{BeliefState, HypothesisSet};
use crate::bench::oracle::{oracle_optimal, ratio_f64};
use crate::codec;
use crate::error::{Error, Result};
use crate::experience::{
    naive_experience, precompute_values, rollout_experience, ExperienceHeuristic,
};
use crate::policy::{evaluate_exact, HistoryPolicy, DEFAULT_DEPTH_CAP};
use crate::scenario::Scenario;
use crate::solver::{extract_history_policy, inflate, solve, BaseHeuristic, Problem, SolverParams};
use crate::world::Scene;

/// A fixed robot start and a finite list of start hypothesis sets.
#[derive(Clone, Debug)]
pub struct ProblemFamily {
    pub scene: Scene,
    /// `(scenario id, hypothesis set)`, pairwise distinct.
    pub sets: Vec<(String, HypothesisSet)>,
}

impl ProblemFamily {
    pub fn new(scene: Scene, sets: Vec<(String, HypothesisSet)>) -> Result<Self> {
        for (i, (id, hs)) in sets.iter().enumerate() {
            for (j, &h) in hs.iter().enumerate() {
                scene.check_pose(h, &format!("{id}[{j}]"))?;
            }
            if sets[..i].iter().any(|(_, other)| other == hs) {
                return Err(Error::InvalidParams(format!(
                    "set {id} repeats an earlier set"
                )));
            }
            if sets[..i].iter().any(|(other, _)| other == id) {
                return Err(Error::InvalidParams(format!("duplicate scenario id {id}")));
            }
        }
        Ok(ProblemFamily { scene, sets })
    }

    pub fn start(&self, hs: &HypothesisSet) -> BeliefState {
        BeliefState::new(self.scene.robot_start, hs.clone())
    }
}

impl From<Scenario> for ProblemFamily {
    fn from(s: Scenario) -> Self {
        ProblemFamily {
            scene: s.scene,
            sets: s.sets,
        }
    }
}

/// Indices of `family.sets` by ascending size, ties by canonical encoding.
pub fn order_problems(family: &ProblemFamily) -> Result<Vec<usize>> {
    if family.sets.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut order: Vec<usize> = (0..family.sets.len()).collect();
    order.sort_by_cached_key(|&i| {
        let hs = &family.sets[i].1;
        (hs.len(), hs.encode())
    });
    Ok(order)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BuildMode {
    /// Roll out the most similar stored policy from the new start.
    Experience,
    /// Use the most similar stored policy's own belief tree.
    Naive,
    /// Experience mode over a seeded random problem order.
    RandomOrder,
    /// Inflated base heuristic only.
    NoExperience,
}

impl BuildMode {
    pub const ALL: [BuildMode; 4] = [
        BuildMode::Experience,
        BuildMode::Naive,
        BuildMode::RandomOrder,
        BuildMode::NoExperience,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BuildMode::Experience => "experience",
            BuildMode::Naive => "naive",
            BuildMode::RandomOrder => "random-order",
            BuildMode::NoExperience => "no-experience",
        }
    }
}

impl fmt::Display for BuildMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuildMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuildMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown build mode `{s}`")))
    }
}

/// Per-problem build record.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildRow {
    pub scenario_id: String,
    pub size: usize,
    pub mode: BuildMode,
    pub epsilon: f64,
    /// Scenario id of the policy used as experience.
    pub experience: Option<String>,
    pub backups: u64,
    /// Node updates spent precomputing experience values.
    pub experience_updates: u64,
    pub wall_time_s: f64,
    pub expected_cost: Option<Ratio<u64>>,
    pub oracle_cost: Option<Ratio<u64>>,
    pub success: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyDatabase {
    policies: Vec<HistoryPolicy>,
}

impl PolicyDatabase {
    pub fn new() -> Self {
        PolicyDatabase::default()
    }

    pub fn insert(&mut self, policy: HistoryPolicy) {
        match self
            .policies
            .iter_mut()
            .find(|p| p.scenario_id == policy.scenario_id)
        {
            Some(slot) => *slot = policy,
            None => self.policies.push(policy),
        }
    }

    pub fn get(&self, scenario_id: &str) -> Option<&HistoryPolicy> {
        self.policies.iter().find(|p| p.scenario_id == scenario_id)
    }

    pub fn policies(&self) -> &[HistoryPolicy] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn to_json(&self) -> String {
        codec::database_to_json(&self.policies)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(PolicyDatabase {
            policies: codec::database_from_json(text)?,
        })
    }
}

/// Compares `|a ∩ c| / |a ∪ c|` with `|b ∩ c| / |b ∪ c|` exactly.
fn jaccard(a: &HypothesisSet, current: &HypothesisSet) -> (usize, usize) {
    let inter = a.intersection_len(current);
    (inter, a.len() + current.len() - inter)
}

/// The stored policy whose start hypotheses are most similar to `current`
/// (Jaccard), preferring larger sets and then earlier scenario ids.
pub fn select_experience<'d>(
    solved: &'d PolicyDatabase,
    current: &HypothesisSet,
) -> Option<&'d HistoryPolicy> {
    solved.policies.iter().min_by(|p, q| {
        let (pi, pu) = jaccard(&p.start.hypotheses, current);
        let (qi, qu) = jaccard(&q.start.hypotheses, current);
        (qi * pu)
            .cmp(&(pi * qu))
            .then(q.start.hypotheses.len().cmp(&p.start.hypotheses.len()))
            .then_with(|| p.scenario_id.cmp(&q.scenario_id))
    })
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub epsilon: f64,
    pub mode: BuildMode,
    pub params: SolverParams,
    /// Computes `oracle_cost`; `None` skips the oracle.
    pub oracle_cap: Option<usize>,
}

impl BuildOptions {
    pub fn new(epsilon: f64, mode: BuildMode) -> Self {
        BuildOptions {
            epsilon,
            mode,
            params: SolverParams::with_epsilon(epsilon),
            oracle_cap: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Build {
    pub database: PolicyDatabase,
    /// In solve order.
    pub rows: Vec<BuildRow>,
}

impl Build {
    pub fn total_backups(&self) -> u64 {
        self.rows.iter().map(|r| r.backups).sum()
    }

    pub fn success_rate(&self) -> f64 {
        self.rows.iter().filter(|r| r.success).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn row(&self, scenario_id: &str) -> Option<&BuildRow> {
        self.rows.iter().find(|r| r.scenario_id == scenario_id)
    }
}

struct Solved {
    policy: HistoryPolicy,
    updates: u64,
}

fn solve_one(
    family: &ProblemFamily,
    id: &str,
    start: &BeliefState,
    experience: Option<&HistoryPolicy>,
    opts: &BuildOptions,
) -> (Result<Solved>, u64) {
    let scene = &family.scene;
    let problem = Problem::new(scene, start.clone());
    let mut params = opts.params.clone();
    params.epsilon = opts.epsilon;
    let mut updates = 0;
    let solution = match experience {
        Some(prior) => {
            let mut exp = match opts.mode {
                BuildMode::Naive => naive_experience(scene, prior),
                _ => rollout_experience(scene, prior, start),
            };
            match precompute_values(scene, &mut exp, opts.epsilon) {
                Ok(stats) => updates = stats.updates,
                Err(e) => return (Err(e), 0),
            }
            solve(
                &problem,
                &ExperienceHeuristic {
                    scene,
                    experience: &exp,
                },
                &params,
            )
        }
        None => match inflate(BaseHeuristic { scene }, opts.epsilon) {
            Ok(h) => solve(&problem, &h, &params),
            Err(e) => Err(e),
        },
    };
    let solution = match solution {
        Ok(s) => s,
        Err(Error::BudgetExhausted(stats)) => {
            let backups = stats.backups;
            return (Err(Error::BudgetExhausted(stats)), backups);
        }
        Err(e) => return (Err(e), 0),
    };
    let backups = solution.stats.backups;
    let policy =
        extract_history_policy(&problem, &solution.table, DEFAULT_DEPTH_CAP).map(|mut policy| {
            policy.scenario_id = id.to_string();
            policy.epsilon = opts.epsilon;
            policy.solver = match experience {
                Some(_) => "e-rtdp-bel".to_string(),
                None => "rtdp-bel".to_string(),
            };
            policy.stats = (&solution.stats).into();
            Solved { policy, updates }
        });
    (policy, backups)
}

/// Solves every problem of the family in order, storing each policy before
/// the next problem selects its experience. Failed problems are recorded in
/// the rows and left out of the database.
pub fn build_database(family: &ProblemFamily, opts: &BuildOptions) -> Result<Build> {
    if !(1.0..f64::INFINITY).contains(&opts.epsilon) {
        return Err(Error::InvalidEpsilon(opts.epsilon));
    }
    let mut order = order_problems(family)?;
    if opts.mode == BuildMode::RandomOrder {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.params.seed));
    }
    let mut database = PolicyDatabase::new();
    let mut rows = Vec::with_capacity(order.len());
    for i in order {
        let (id, hs) = &family.sets[i];
        let start = family.start(hs);
        let clock = Instant::now();
        let experience = match opts.mode {
            BuildMode::NoExperience => None,
            _ => select_experience(&database, hs),
        };
        let (solved, backups) = solve_one(family, id, &start, experience, opts);
        let wall_time_s = clock.elapsed().as_secs_f64();
        let oracle_cost = opts
            .oracle_cap
            .and_then(|cap| oracle_optimal(&family.scene, &start, cap).ok())
            .map(|o| o.value);
        let mut row = BuildRow {
            scenario_id: id.clone(),
            size: hs.len(),
            mode: opts.mode,
            epsilon: opts.epsilon,
            experience: experience.map(|p| p.scenario_id.clone()),
            backups,
            experience_updates: 0,
            wall_time_s,
            expected_cost: None,
            oracle_cost,
            success: false,
            error: None,
        };
        match solved {
            Ok(s) => {
                let eval = evaluate_exact(&family.scene, &s.policy, &start, DEFAULT_DEPTH_CAP);
                row.experience_updates = s.updates;
                row.expected_cost = Some(eval.expected_cost);
                row.success = eval.success;
                database.insert(s.policy);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(Build { database, rows })
}

pub const STATS_HEADER: [&str; 9] = [
    "scenario_id",
    "|H|",
    "mode",
    "epsilon",
    "backups",
    "wall_time_s",
    "expected_cost",
    "oracle_cost",
    "success",
];

fn fmt_cost(c: Option<Ratio<u64>>) -> String {
    c.map(|c| format!("{:.12}", ratio_f64(c)))
        .unwrap_or_default()
}

/// Writes the build rows sorted by scenario id. Wall time is left empty
/// unless `wall_time` is set, keeping the file a function of its inputs.
pub fn write_stats_csv(rows: &[BuildRow], wall_time: bool, out: impl Write) -> Result<()> {
    let mut sorted: Vec<&BuildRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.scenario_id
            .cmp(&b.scenario_id)
            .then(a.mode.cmp(&b.mode))
            .then(a.epsilon.partial_cmp(&b.epsilon).unwrap_or(Ordering::Equal))
    });
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_HEADER)?;
    for r in sorted {
        w.write_record([
            r.scenario_id.clone(),
            r.size.to_string(),
            r.mode.to_string(),
            r.epsilon.to_string(),
            r.backups.to_string(),
            if wall_time {
                format!("{:.6}", r.wall_time_s)
            } else {
                String::new()
            },
            fmt_cost(r.expected_cost),
            fmt_cost(r.oracle_cost),
            r.success.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
