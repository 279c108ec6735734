//! Benchmark orchestration and CSV/JSON reports.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use num_rational::Ratio;
use serde::Serialize;

use super::oracle::{oracle_optimal, ratio_f64, DEFAULT_ORACLE_CAP};
use crate::error::{Error, Result};
use crate::preprocess::{build_database, BuildMode, BuildOptions, ProblemFamily};
use crate::scenario::Scenario;
use crate::solver::SolverParams;
use crate::tbl::{evaluate_tbl, TblParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    Rtdp { epsilon: f64 },
    Ertdp { epsilon: f64, mode: BuildMode },
    Tbl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rtdp { .. } => "rtdp-bel",
            Method::Ertdp {
                mode: BuildMode::Naive,
                ..
            } => "e-rtdp-bel-naive",
            Method::Ertdp {
                mode: BuildMode::RandomOrder,
                ..
            } => "e-rtdp-bel-random",
            Method::Ertdp { .. } => "e-rtdp-bel",
            Method::Tbl => "tbl",
        }
    }

    pub fn epsilon(self) -> Option<f64> {
        match self {
            Method::Rtdp { epsilon } | Method::Ertdp { epsilon, .. } => Some(epsilon),
            Method::Tbl => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Method::Rtdp { .. } => "rtdp",
            Method::Ertdp {
                mode: BuildMode::Naive,
                ..
            } => "ertdp-naive",
            Method::Ertdp {
                mode: BuildMode::RandomOrder,
                ..
            } => "ertdp-random",
            Method::Ertdp { .. } => "ertdp",
            Method::Tbl => return f.write_str("tbl"),
        };
        write!(f, "{tag}:{}", self.epsilon().unwrap_or(1.0))
    }
}

/// Parses `rtdp:<eps>`, `ertdp:<eps>`, `ertdp-naive:<eps>`,
/// `ertdp-random:<eps>` or `tbl`. The epsilon defaults to 1 for `rtdp` and 2
/// otherwise.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (tag, eps) = match s.split_once(':') {
            Some((t, e)) => (t, Some(e)),
            None => (s, None),
        };
        let epsilon = |default: f64| -> Result<f64> {
            let e = match eps {
                Some(e) => e
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad epsilon in `{s}`")))?,
                None => default,
            };
            if !(1.0..f64::INFINITY).contains(&e) {
                return Err(Error::InvalidEpsilon(e));
            }
            Ok(e)
        };
        match tag {
            "rtdp" => Ok(Method::Rtdp {
                epsilon: epsilon(1.0)?,
            }),
            "ertdp" => Ok(Method::Ertdp {
                epsilon: epsilon(2.0)?,
                mode: BuildMode::Experience,
            }),
            "ertdp-naive" => Ok(Method::Ertdp {
                epsilon: epsilon(2.0)?,
                mode: BuildMode::Naive,
            }),
            "ertdp-random" => Ok(Method::Ertdp {
                epsilon: epsilon(2.0)?,
                mode: BuildMode::RandomOrder,
            }),
            "tbl" if eps.is_none() => Ok(Method::Tbl),
            _ => Err(Error::Parse(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub methods: Vec<Method>,
    pub params: SolverParams,
    /// Oracle costs are left empty beyond this many reachable beliefs.
    pub oracle_cap: usize,
    /// Record wall times; off by default so reports are reproducible.
    pub wall_time: bool,
}

impl BenchOptions {
    pub fn new(methods: Vec<Method>) -> Self {
        BenchOptions {
            methods,
            params: SolverParams::default(),
            oracle_cap: DEFAULT_ORACLE_CAP,
            wall_time: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario_id: String,
    #[serde(rename = "|H|")]
    pub size: usize,
    pub method: String,
    pub epsilon: Option<f64>,
    pub success: bool,
    pub backups: Option<u64>,
    pub wall_time_s: Option<f64>,
    pub expected_cost: Option<f64>,
    pub oracle_cost: Option<f64>,
    pub relative_speedup: Option<f64>,
    pub relative_cost: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

pub const REPORT_HEADER: [&str; 11] = [
    "scenario_id",
    "|H|",
    "method",
    "epsilon",
    "success",
    "backups",
    "wall_time_s",
    "expected_cost",
    "oracle_cost",
    "relative_speedup",
    "relative_cost",
];

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.12}")).unwrap_or_default()
}

impl BenchmarkReport {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.scenario_id.clone(),
                r.size.to_string(),
                r.method.clone(),
                cell(r.epsilon),
                r.success.to_string(),
                cell(r.backups),
                r.wall_time_s.map(|t| format!("{t:.6}")).unwrap_or_default(),
                fixed(r.expected_cost),
                fixed(r.oracle_cost),
                fixed(r.relative_speedup),
                fixed(r.relative_cost),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("report serializes")
    }

    pub fn rows_for(
        &self,
        method: &str,
        epsilon: Option<f64>,
    ) -> impl Iterator<Item = &ReportRow> + '_ {
        let method = method.to_string();
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.epsilon == epsilon)
    }
}

/// Runs every method over every set of `scenario` and assembles a report
/// sorted by (scenario id, method, epsilon). Relative columns compare
/// against the `rtdp:1` row of the same set, or against the row itself when
/// only one method runs.
pub fn run_benchmark(scenario: &Scenario, opts: &BenchOptions) -> Result<BenchmarkReport> {
    if opts.methods.is_empty() {
        return Err(Error::InvalidParams("no benchmark methods".into()));
    }
    opts.params.validate()?;
    let family = ProblemFamily::from(scenario.clone());
    let oracle: HashMap<&str, Option<Ratio<u64>>> = family
        .sets
        .iter()
        .map(|(id, hs)| {
            let value = oracle_optimal(&family.scene, &family.start(hs), opts.oracle_cap)
                .ok()
                .map(|o| o.value);
            (id.as_str(), value)
        })
        .collect();
    let mut rows = Vec::new();
    for &method in &opts.methods {
        match method {
            Method::Rtdp { epsilon } | Method::Ertdp { epsilon, .. } => {
                let mode = match method {
                    Method::Ertdp { mode, .. } => mode,
                    _ => BuildMode::NoExperience,
                };
                let mut build_opts = BuildOptions::new(epsilon, mode);
                build_opts.params = opts.params.clone();
                let build = build_database(&family, &build_opts)?;
                for r in build.rows {
                    rows.push(ReportRow {
                        size: r.size,
                        method: method.name().to_string(),
                        epsilon: Some(epsilon),
                        success: r.success,
                        backups: Some(r.backups),
                        wall_time_s: opts.wall_time.then_some(r.wall_time_s),
                        expected_cost: r.expected_cost.map(ratio_f64),
                        oracle_cost: oracle[r.scenario_id.as_str()].map(ratio_f64),
                        relative_speedup: None,
                        relative_cost: None,
                        scenario_id: r.scenario_id,
                    });
                }
            }
            Method::Tbl => {
                let params = TblParams::for_scene(&family.scene);
                for (id, hs) in &family.sets {
                    let clock = Instant::now();
                    let eval = evaluate_tbl(&family.scene, &family.start(hs), &params);
                    let wall = clock.elapsed().as_secs_f64();
                    rows.push(ReportRow {
                        scenario_id: id.clone(),
                        size: hs.len(),
                        method: method.name().to_string(),
                        epsilon: None,
                        success: eval.as_ref().is_ok_and(|e| e.success),
                        backups: None,
                        wall_time_s: opts.wall_time.then_some(wall),
                        expected_cost: eval.ok().map(|e| ratio_f64(e.expected_cost)),
                        oracle_cost: oracle[id.as_str()].map(ratio_f64),
                        relative_speedup: None,
                        relative_cost: None,
                    });
                }
            }
        }
    }
    let single = opts.methods.len() == 1;
    let baseline: HashMap<String, (Option<u64>, Option<f64>)> = rows
        .iter()
        .filter(|r| r.method == "rtdp-bel" && r.epsilon == Some(1.0))
        .map(|r| (r.scenario_id.clone(), (r.backups, r.expected_cost)))
        .collect();
    for r in &mut rows {
        let (base_backups, base_cost) = if single {
            (r.backups, r.expected_cost)
        } else {
            baseline
                .get(&r.scenario_id)
                .copied()
                .unwrap_or((None, None))
        };
        r.relative_speedup = match (base_backups, r.backups) {
            (Some(b), Some(x)) if x > 0 => Some(b as f64 / x as f64),
            (Some(_), Some(_)) => Some(1.0),
            _ => None,
        };
        r.relative_cost = match (base_cost, r.expected_cost) {
            (Some(b), Some(x)) if b > 0.0 => Some(x / b),
            (Some(_), Some(_)) => Some(1.0),
            _ => None,
        };
    }
    rows.sort_by(|a, b| {
        a.scenario_id
            .cmp(&b.scenario_id)
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| {
                a.epsilon
                    .unwrap_or(0.0)
                    .total_cmp(&b.epsilon.unwrap_or(0.0))
            })
    });
    Ok(BenchmarkReport { rows })
}
