//! JSON codec for policy files and policy databases.
//!
//! Output is canonical: entries are sorted by history key and the database
//! index is sorted by scenario id, so equal policies serialize to identical
//! bytes.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefState, HypothesisSet};
use crate::error::{Error, Result};
use crate::policy::{History, HistoryPolicy, PolicyStats};
use crate::scenario::{CellConfig, PoseConfig};
use crate::world::{Action, Hypothesis, Rotation};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    format_version: u64,
    scenario_id: String,
    b_start: BeliefDoc,
    epsilon: f64,
    solver: String,
    entries: Vec<EntryDoc>,
    stats: StatsDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BeliefDoc {
    r: CellConfig,
    #[serde(rename = "H")]
    hypotheses: Vec<PoseConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    history: String,
    action: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsDoc {
    backups: u64,
    rollouts: u64,
    converged: bool,
    v_start: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatabaseDoc {
    format_version: u64,
    policies: Vec<PolicyDoc>,
    index: BTreeMap<String, usize>,
}

fn doc_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Document {
        path: path.into(),
        message: message.into(),
    }
}

fn to_doc(policy: &HistoryPolicy) -> PolicyDoc {
    PolicyDoc {
        format_version: FORMAT_VERSION,
        scenario_id: policy.scenario_id.clone(),
        b_start: BeliefDoc {
            r: policy.start.robot.into(),
            hypotheses: policy.start.hypotheses.iter().map(|&h| h.into()).collect(),
        },
        epsilon: policy.epsilon,
        solver: policy.solver.clone(),
        entries: policy
            .entries()
            .map(|(k, a)| EntryDoc {
                history: k.to_string(),
                action: a.encode(),
            })
            .collect(),
        stats: StatsDoc {
            backups: policy.stats.backups,
            rollouts: policy.stats.rollouts,
            converged: policy.stats.converged,
            v_start: policy.stats.v_start,
        },
    }
}

fn from_doc(doc: PolicyDoc, prefix: &str) -> Result<HistoryPolicy> {
    let mut hs = Vec::with_capacity(doc.b_start.hypotheses.len());
    for (i, p) in doc.b_start.hypotheses.iter().enumerate() {
        let rot = Rotation::from_degrees(p.rot)
            .ok_or_else(|| doc_error(format!("{prefix}b_start.H[{i}].rot"), "bad rotation"))?;
        hs.push(Hypothesis::new(p.x, p.y, rot));
    }
    let hypotheses = HypothesisSet::new(hs)
        .map_err(|_| doc_error(format!("{prefix}b_start.H"), "empty hypothesis set"))?;
    let mut entries = BTreeMap::new();
    for (i, e) in doc.entries.iter().enumerate() {
        // re-encoding normalizes the key
        let history = History::parse(&e.history)
            .map_err(|err| doc_error(format!("{prefix}entries[{i}].history"), err.to_string()))?;
        let action: Action = e.action.parse().map_err(|err: Error| {
            doc_error(format!("{prefix}entries[{i}].action"), err.to_string())
        })?;
        if entries.insert(history.encode(), action).is_some() {
            return Err(doc_error(
                format!("{prefix}entries[{i}].history"),
                "duplicate history",
            ));
        }
    }
    let mut policy =
        HistoryPolicy::new(BeliefState::new(doc.b_start.r.into(), hypotheses), entries);
    policy.scenario_id = doc.scenario_id;
    policy.epsilon = doc.epsilon;
    policy.solver = doc.solver;
    policy.stats = PolicyStats {
        backups: doc.stats.backups,
        rollouts: doc.stats.rollouts,
        converged: doc.stats.converged,
        v_start: doc.stats.v_start,
    };
    Ok(policy)
}

fn parse_versioned<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| doc_error("", e.to_string()))?;
    let version = value
        .get("format_version")
        .ok_or_else(|| doc_error("format_version", "missing field"))?
        .as_u64()
        .ok_or_else(|| doc_error("format_version", "expected an unsigned integer"))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    serde_path_to_error::deserialize(value)
        .map_err(|e| doc_error(e.path().to_string(), e.inner().to_string()))
}

pub fn policy_to_json(policy: &HistoryPolicy) -> String {
    serde_json::to_string_pretty(&to_doc(policy)).expect("policy serializes")
}

pub fn policy_from_json(text: &str) -> Result<HistoryPolicy> {
    from_doc(parse_versioned(text)?, "")
}

pub fn database_to_json(policies: &[HistoryPolicy]) -> String {
    let doc = DatabaseDoc {
        format_version: FORMAT_VERSION,
        policies: policies.iter().map(to_doc).collect(),
        index: policies
            .iter()
            .enumerate()
            .map(|(i, p)| (p.scenario_id.clone(), i))
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("database serializes")
}

pub fn database_from_json(text: &str) -> Result<Vec<HistoryPolicy>> {
    let doc: DatabaseDoc = parse_versioned(text)?;
    let n = doc.policies.len();
    let policies = doc
        .policies
        .into_iter()
        .enumerate()
        .map(|(i, p)| from_doc(p, &format!("policies[{i}].")))
        .collect::<Result<Vec<_>>>()?;
    if doc.index.len() != n {
        return Err(doc_error("index", "index does not cover every policy"));
    }
    for (id, &i) in &doc.index {
        if policies.get(i).map(|p| &p.scenario_id) != Some(id) {
            return Err(doc_error(
                format!("index.{id}"),
                "index points at the wrong policy",
            ));
        }
    }
    Ok(policies)
}
