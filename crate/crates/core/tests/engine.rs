mod common;

use qcbb::blp::{brute_force_optimum, generate_spp, BlpInstance, SppParams};
use qcbb::engine::{
    run_plain_qaoa, solve, ClockMode, NodeOutcome, SolveStatus, SolverConfig,
};
use qcbb::metrics::{primal_dual_integral, Axis, BoundSeries, EventKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fast(seed: u64) -> SolverConfig {
    SolverConfig {
        node_queries: 20,
        shots: 256,
        seed,
        ..SolverConfig::default()
    }
}

fn value(r: &qcbb::engine::SolveResult) -> Option<f64> {
    r.best_feasible.as_ref().map(|s| s.value)
}

#[test]
fn pruning_does_not_change_the_optimum() {
    for seed in 0..50u64 {
        let n = 5 + (seed % 4) as usize;
        let inst = generate_spp(SppParams::new(n, 3), seed).unwrap();
        let on = solve(&inst, &fast(seed)).unwrap();
        let off = solve(
            &inst,
            &SolverConfig {
                bound_pruning: false,
                big_m_pruning: false,
                ..fast(seed)
            },
        )
        .unwrap();
        assert_eq!(on.status, SolveStatus::Optimal);
        assert_eq!(off.status, SolveStatus::Optimal);
        assert_eq!(value(&on), value(&off), "seed {seed}");
        assert_eq!(value(&on), brute_force_optimum(&inst).unwrap().value());
        assert!(off.nodes_evaluated >= on.nodes_evaluated);
        assert!(off.nodes.iter().all(|r| r.outcome != NodeOutcome::PrunedBound));
    }
}

#[test]
fn workers_find_the_same_optimum() {
    for seed in 0..8u64 {
        let inst = generate_spp(SppParams::new(10, 4), 100 + seed).unwrap();
        let one = solve(&inst, &fast(seed)).unwrap();
        let four = solve(
            &inst,
            &SolverConfig {
                workers: 4,
                ..fast(seed)
            },
        )
        .unwrap();
        assert_eq!(four.status, SolveStatus::Optimal);
        assert_eq!(value(&one), value(&four));
    }
}

#[test]
fn warm_start_and_wall_clock_still_solve() {
    let inst = generate_spp(SppParams::new(11, 5), 9).unwrap();
    let opt = brute_force_optimum(&inst).unwrap().value();
    let cfg = SolverConfig {
        warm_start: true,
        clock: ClockMode::Wall,
        vqa_on_pruned_nodes: true,
        ..fast(3)
    };
    let r = solve(&inst, &cfg).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_eq!(value(&r), opt);
}

#[test]
fn limits_and_gap() {
    let inst = generate_spp(SppParams::new(14, 6), 21).unwrap();
    let r = solve(
        &inst,
        &SolverConfig {
            node_limit: Some(1),
            ..fast(1)
        },
    )
    .unwrap();
    if r.status != SolveStatus::Optimal {
        assert_eq!(r.status, SolveStatus::NodeLimit);
    }
    assert_eq!(r.nodes_evaluated, 1);

    let r = solve(
        &inst,
        &SolverConfig {
            gap_target: Some(1e9),
            ..fast(1)
        },
    )
    .unwrap();
    assert!(matches!(r.status, SolveStatus::GapReached | SolveStatus::Optimal));
    assert!(r.nodes_evaluated <= 2);

    let r = solve(
        &inst,
        &SolverConfig {
            time_limit: Some(1e-9),
            ..fast(1)
        },
    )
    .unwrap();
    assert_eq!(r.status, SolveStatus::TimeLimit);
    assert_eq!(r.nodes_evaluated, 0);
    assert_eq!(r.trace.last().unwrap().status.as_deref(), Some("time_limit"));
}

#[test]
fn solved_trace_closes_the_gap() {
    let inst = generate_spp(SppParams::new(10, 4), 77).unwrap();
    let r = solve(&inst, &fast(5)).unwrap();
    let done = r.trace.last().unwrap();
    assert_eq!(done.kind, EventKind::Done);
    assert_eq!(done.status.as_deref(), Some("optimal"));
    let (lb, ub) = (done.lb.unwrap(), done.ub.unwrap());
    assert!((ub - lb).abs() <= 1e-9, "{lb} {ub}");
    let series = BoundSeries::from_trace(&r.trace, Axis::Nodes);
    assert!(primal_dual_integral(&series).unwrap() >= 0.0);
    assert_eq!(
        r.trace.iter().filter(|e| e.kind == EventKind::OptimizerQuery).count(),
        r.total_queries
    );
}

#[test]
fn infeasible_instance_found_by_search() {
    // odd cycle: no propagation at the root, infeasible everywhere
    let inst = BlpInstance::new(
        vec![1.0, 2.0, 3.0],
        vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]],
        vec![1.0; 3],
    )
    .unwrap();
    let r = solve(&inst, &fast(0)).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.best_feasible.is_none());
    assert!(r.nodes_evaluated >= 1);
    assert!(r
        .nodes
        .iter()
        .filter(|n| n.evaluated)
        .all(|n| matches!(n.outcome, NodeOutcome::PrunedInfeasible(_) | NodeOutcome::Branched)));
}

#[test]
fn unplanted_instances_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for seed in 0..15u64 {
        let inst = common::random_unplanted_spp(&mut rng, 8, 4);
        let r = solve(&inst, &fast(seed)).unwrap();
        let bf = brute_force_optimum(&inst).unwrap();
        assert_eq!(value(&r), bf.value(), "seed {seed}");
        let expected = if bf.optimum.is_some() {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        };
        assert_eq!(r.status, expected);
    }
}

#[test]
fn baseline_respects_optimum_floor() {
    let inst = BlpInstance::new(
        vec![1.0, 1.0, 1.0],
        vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]],
        vec![1.0, 1.0],
    )
    .unwrap();
    let b = run_plain_qaoa(&inst, &SolverConfig::default(), 500).unwrap();
    assert!(b.best_penalized.value >= 1.0);
    assert!(b.optimizer.total_queries() <= 500);
}
