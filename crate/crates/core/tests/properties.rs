mod common;

use num_rational::Ratio;
use proptest::prelude::*;

use common::{random_instance, reachable};
use touchloc::belief::{base_heuristic, pair_heuristic, successors, BeliefState, HypothesisSet};
use touchloc::bench::oracle::oracle_optimal;
use touchloc::codec::{policy_from_json, policy_to_json};
use touchloc::experience::{precompute_values, rollout_experience, ExperienceHeuristic};
use touchloc::policy::{evaluate_exact, execute, DEFAULT_DEPTH_CAP};
use touchloc::solver::{
    extract_history_policy, inflate, solve, solve_observed, solve_rtdp, BaseHeuristic, Problem,
    SolverParams,
};
use touchloc::tbl::{evaluate_tbl, TblParams};
use touchloc::world::{Cell, Scene};

const CAP: usize = 20_000;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 96,
        ..ProptestConfig::default()
    }
}

/// Random subset of `b`'s hypotheses with at least one member, at `robot`.
fn sub_belief(b: &BeliefState, mask: u64, robot: Cell) -> BeliefState {
    let hs: Vec<_> = b
        .hypotheses
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, &h)| h)
        .collect();
    let hs = if hs.is_empty() {
        vec![b.hypotheses.as_slice()[0]]
    } else {
        hs
    };
    BeliefState::new(robot, HypothesisSet::new(hs).unwrap())
}

fn free_cell(scene: &Scene, b: &BeliefState, x: i32, y: i32) -> Option<Cell> {
    let c = Cell::new(
        x.rem_euclid(scene.world.width()),
        y.rem_euclid(scene.world.height()),
    );
    (!b.hypotheses.iter().any(|&h| scene.blocked(h, c))).then_some(c)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn successors_partition_the_belief(seed in any::<u64>()) {
        let inst = random_instance(seed, 8, 5, true, CAP);
        for b in reachable(&inst.scene, &inst.start, 300) {
            for &a in &inst.scene.actions {
                let branches = successors(&inst.scene, &b, a);
                let total: Ratio<u64> = branches.iter().map(|br| br.prob()).sum();
                prop_assert_eq!(total, Ratio::from_integer(1));
                let mut seen: Vec<_> = branches.iter().flat_map(|br| br.belief.hypotheses.iter().copied()).collect();
                seen.sort();
                prop_assert_eq!(seen.as_slice(), b.hypotheses.as_slice());
                for br in &branches {
                    prop_assert!(br.belief.hypotheses.is_subset(&b.hypotheses));
                    if branches.len() > 1 {
                        prop_assert!(br.belief.hypotheses.len() < b.hypotheses.len());
                    }
                }
            }
        }
    }

    #[test]
    fn pair_heuristic_triangle(seed in any::<u64>(), masks in any::<[u64; 3]>(), cells in any::<[(i8, i8); 3]>()) {
        let inst = random_instance(seed, 10, 6, true, CAP);
        let mut bs = Vec::new();
        for (m, (x, y)) in masks.iter().zip(cells) {
            let Some(c) = free_cell(&inst.scene, &inst.start, x.into(), y.into()) else { return Ok(()) };
            bs.push(sub_belief(&inst.start, *m, c));
        }
        let inf = |d: Option<u32>| d.map_or(u64::MAX / 4, u64::from);
        let direct = inf(pair_heuristic(&bs[0], &bs[2]));
        prop_assert!(direct <= inf(pair_heuristic(&bs[0], &bs[1])) + inf(pair_heuristic(&bs[1], &bs[2])));
    }

    #[test]
    fn base_heuristic_is_consistent_and_admissible(seed in any::<u64>()) {
        let inst = random_instance(seed, 8, 5, true, CAP);
        let scene = &inst.scene;
        let oracle = oracle_optimal(scene, &inst.start, CAP).unwrap();
        for b in reachable(scene, &inst.start, 400) {
            let h = base_heuristic(scene, &b).unwrap();
            if let Some(v) = oracle.value(&b) {
                prop_assert!(Ratio::from_integer(u64::from(h)) <= v, "{b}: {h} > {v}");
            }
            if b.is_goal() {
                continue;
            }
            for &a in &scene.actions {
                for br in successors(scene, &b, a) {
                    let next = base_heuristic(scene, &br.belief).unwrap();
                    prop_assert!(h <= br.cost + next);
                }
            }
        }
    }

    #[test]
    fn restriction_inequality(seed in any::<u64>(), mask in any::<u64>(), x in any::<i8>(), y in any::<i8>()) {
        let inst = random_instance(seed, 10, 6, true, CAP);
        let scene = &inst.scene;
        let Some(c) = free_cell(scene, &inst.start, x.into(), y.into()) else { return Ok(()) };
        let sub = sub_belief(&inst.start, mask, c);
        prop_assume!(!sub.is_goal());
        let lhs = base_heuristic(scene, &inst.start).unwrap();
        let rhs = pair_heuristic(&inst.start, &sub).unwrap() + base_heuristic(scene, &sub).unwrap();
        prop_assert!(lhs <= rhs);
    }

    #[test]
    fn rtdp_values_grow_and_policies_are_coherent(seed in any::<u64>()) {
        let inst = random_instance(seed, 8, 5, false, CAP);
        let scene = &inst.scene;
        let problem = Problem::new(scene, inst.start.clone());
        let mut decreases = 0;
        let sol = solve_observed(
            &problem,
            &BaseHeuristic { scene },
            &SolverParams::default(),
            &mut |_, old, new| if new < old - 1e-9 { decreases += 1 },
        ).unwrap();
        prop_assert_eq!(decreases, 0);
        let policy = extract_history_policy(&problem, &sol.table, DEFAULT_DEPTH_CAP).unwrap();
        let eval = evaluate_exact(scene, &policy, &inst.start, DEFAULT_DEPTH_CAP);
        prop_assert!(eval.success);
        prop_assert_eq!(eval.expected_cost, inst.optimal);
        for run in &eval.per_hypothesis {
            let trace = execute(scene, &policy, run.hypothesis, DEFAULT_DEPTH_CAP).unwrap();
            prop_assert_eq!(trace.total_cost, run.cost);
            prop_assert!(trace.localized);
        }
        for (key, _) in policy.entries() {
            if let Some(cut) = key.rfind(';') {
                prop_assert!(policy.lookup_key(&key[..cut]).is_some(), "missing prefix of {}", key);
            } else if !key.is_empty() {
                prop_assert!(policy.lookup_key("").is_some());
            }
        }
        prop_assert_eq!(policy_from_json(&policy_to_json(&policy)).unwrap(), policy);
    }

    #[test]
    fn experience_query_bounds(seed in any::<u64>(), mask in any::<u64>()) {
        let inst = random_instance(seed, 8, 5, true, CAP);
        let scene = &inst.scene;
        let prior_start = sub_belief(&inst.start, mask, inst.start.robot);
        prop_assume!(!prior_start.is_goal());
        let prior_problem = Problem::new(scene, prior_start);
        let sol = solve_rtdp(&prior_problem, &SolverParams::with_epsilon(2.0)).unwrap();
        let prior = extract_history_policy(&prior_problem, &sol.table, DEFAULT_DEPTH_CAP).unwrap();
        let probes = reachable(scene, &inst.start, 200);
        let mut last: Option<Vec<f64>> = None;
        for eps in [1.0, 2.0, 3.0, 5.0] {
            let mut exp = rollout_experience(scene, &prior, &inst.start);
            precompute_values(scene, &mut exp, eps).unwrap();
            let q: Vec<f64> = probes.iter().map(|b| exp.query(scene, b)).collect();
            for (b, &v) in probes.iter().zip(&q) {
                prop_assert!(v <= eps * f64::from(base_heuristic(scene, b).unwrap()) + 1e-9);
            }
            if let Some(prev) = &last {
                for (lo, hi) in prev.iter().zip(&q) {
                    prop_assert!(lo <= hi);
                }
            }
            let problem = Problem::new(scene, inst.start.clone());
            let params = SolverParams::with_epsilon(eps);
            let sol = solve(&problem, &ExperienceHeuristic { scene, experience: &exp }, &params).unwrap();
            let policy = extract_history_policy(&problem, &sol.table, DEFAULT_DEPTH_CAP).unwrap();
            let eval = evaluate_exact(scene, &policy, &inst.start, DEFAULT_DEPTH_CAP);
            prop_assert!(eval.success);
            prop_assert!(eval.expected_cost_f64() <= eps * touchloc::bench::oracle::ratio_f64(inst.optimal) + 1e-9);
            last = Some(q);
        }
    }

    #[test]
    fn inflated_rtdp_and_tbl_never_beat_the_oracle(seed in any::<u64>()) {
        let inst = random_instance(seed, 8, 5, true, CAP);
        let scene = &inst.scene;
        let problem = Problem::new(scene, inst.start.clone());
        let sol = solve(&problem, &inflate(BaseHeuristic { scene }, 3.0).unwrap(), &SolverParams::with_epsilon(3.0)).unwrap();
        let policy = extract_history_policy(&problem, &sol.table, DEFAULT_DEPTH_CAP).unwrap();
        let eval = evaluate_exact(scene, &policy, &inst.start, DEFAULT_DEPTH_CAP);
        prop_assert!(eval.expected_cost >= inst.optimal);
        prop_assert!(eval.expected_cost <= inst.optimal * Ratio::from_integer(3));
        let tbl = evaluate_tbl(scene, &inst.start, &TblParams::for_scene(scene)).unwrap();
        if tbl.success {
            prop_assert!(tbl.expected_cost >= inst.optimal);
        }
    }
}
