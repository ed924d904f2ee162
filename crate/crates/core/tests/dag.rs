use std::collections::VecDeque;

use bulksteal::baseline::ImplKind;
use bulksteal::dag::{explore_dyn, generate_dag, reachable_count, Dag, NodeId};
use bulksteal::Proportion;

/// Kahn's algorithm: a full topological order exists iff the graph is acyclic.
fn topological_order(dag: &Dag) -> Option<Vec<NodeId>> {
    let n = dag.node_count();
    let mut indegree = vec![0usize; n];
    for v in 0..n as NodeId {
        for &w in dag.successors(v) {
            indegree[w as usize] += 1;
        }
    }
    let mut ready: VecDeque<NodeId> = (0..n as NodeId).filter(|&v| indegree[v as usize] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_front() {
        order.push(v);
        for &w in dag.successors(v) {
            indegree[w as usize] -= 1;
            if indegree[w as usize] == 0 {
                ready.push_back(w);
            }
        }
    }
    (order.len() == n).then_some(order)
}

#[test]
fn generation_is_deterministic_per_seed() {
    let a = generate_dag(1000, 2.0, 7).unwrap();
    let b = generate_dag(1000, 2.0, 7).unwrap();
    assert_eq!(a, b);
    let c = generate_dag(1000, 2.0, 8).unwrap();
    assert_ne!(a, c);
}

#[test]
fn generated_graphs_are_acyclic_and_rooted() {
    for (n, d, seed) in [(1000, 2.0, 7), (5000, 4.0, 1), (3000, 0.5, 2), (2000, 1.5, 3)] {
        let dag = generate_dag(n, d, seed).unwrap();
        let order = topological_order(&dag).expect("acyclic");
        assert_eq!(order[0], dag.root());
        // Only the root lacks a predecessor.
        assert_eq!(reachable_count(&dag), n, "n={n} d={d}");
        for v in 0..n as NodeId {
            let s = dag.successors(v);
            assert!(s.windows(2).all(|w| w[0] < w[1]), "duplicate or unsorted successors");
        }
    }
}

#[test]
fn eight_workers_visit_every_node_once_and_steal() {
    let dag = generate_dag(200_000, 4.0, 11).unwrap();
    let reachable = reachable_count(&dag) as u64;
    for kind in ImplKind::ALL {
        let r = explore_dyn(kind, &dag, 8, Proportion::HALF).unwrap();
        assert_eq!(r.visited, reachable, "{kind}");
        assert_eq!(r.per_worker_visits.iter().sum::<u64>(), reachable);
        assert!(r.steals_succeeded > 0, "{kind}: no steals");
        assert!(r.max_concurrent_steals <= 1);
    }
}

#[test]
fn repeated_runs_agree_on_visited() {
    let dag = generate_dag(50_000, 3.0, 5).unwrap();
    let counts: Vec<u64> = (0..5)
        .map(|_| explore_dyn(ImplKind::Lf, &dag, 4, Proportion::percent(30).unwrap()).unwrap().visited)
        .collect();
    assert!(counts.iter().all(|&c| c == 50_000));
}

#[test]
fn proportions_above_half_are_rejected() {
    let dag = generate_dag(10, 2.0, 0).unwrap();
    let p = Proportion::uncapped(0.75).unwrap();
    assert!(explore_dyn(ImplKind::Lf, &dag, 2, p).is_err());
}
