//! Dominant sets and seed-constrained clusters on a toy graph with two
//! tight triangles joined by one weak edge.

use std::collections::BTreeSet;

use cdseg::dynamics::{build_program, extract_cds_collection, inimdyn_solve, SolverConfig};
use cdseg::graph::{is_dominant_set, AffinityGraph, SimplexVector};

fn main() {
    let mut rows = vec![vec![0.0; 6]; 6];
    let mut link = |i: usize, j: usize, w: f64| {
        rows[i][j] = w;
        rows[j][i] = w;
    };
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        link(i, j, 0.9);
    }
    for (i, j) in [(3, 4), (3, 5), (4, 5)] {
        link(i, j, 0.7);
    }
    link(2, 3, 0.1);
    let graph = AffinityGraph::from_rows(&rows).unwrap();
    let cfg = SolverConfig::default();

    let everything: BTreeSet<usize> = (0..6).collect();
    let prog = build_program(&graph, &everything, &cfg).unwrap();
    let free = inimdyn_solve(&prog, &SimplexVector::uniform(6), &cfg).unwrap();
    println!(
        "unconstrained: support {:?}, value {:.4}, dominant {}",
        free.support,
        free.value,
        is_dominant_set(&graph, &free.support).unwrap()
    );

    for seeds in [BTreeSet::from([4]), BTreeSet::from([1, 5])] {
        let prog = build_program(&graph, &seeds, &cfg).unwrap();
        println!("seeds {seeds:?}: alpha {:.4}", prog.alpha);
        for (round, set) in extract_cds_collection(&graph, &seeds, &cfg).unwrap().iter().enumerate() {
            println!("  round {round}: support {:?} after {} steps", set.support, set.iterations);
        }
    }
}
