#![allow(dead_code)]

use lipcon::DiGraph;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeSet;

/// Hamiltonian cycle through a random permutation plus random extra edges.
pub fn random_strongly_connected<R: Rng>(rng: &mut R, n: usize, extra_density: f64) -> DiGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = BTreeSet::new();
    for k in 0..n {
        edges.insert((order[k], order[(k + 1) % n]));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(extra_density) {
                edges.insert((i, j));
            }
        }
    }
    DiGraph::new(n, edges).unwrap()
}

/// Union of edge-disjoint directed cycles, starting from a Hamiltonian one,
/// so in-degree equals out-degree everywhere.
pub fn random_balanced<R: Rng>(rng: &mut R, n: usize, attempts: usize) -> DiGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = BTreeSet::new();
    for k in 0..n {
        edges.insert((order[k], order[(k + 1) % n]));
    }
    for _ in 0..attempts {
        let len = rng.gen_range(2..=n);
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(rng);
        let cycle: Vec<(usize, usize)> = (0..len).map(|k| (nodes[k], nodes[(k + 1) % len])).collect();
        if cycle.iter().all(|e| !edges.contains(e)) {
            edges.extend(cycle);
        }
    }
    DiGraph::new(n, edges).unwrap()
}

/// Arbitrary digraph, usually not strongly connected.
pub fn random_digraph<R: Rng>(rng: &mut R, n: usize, density: f64) -> DiGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                edges.push((i, j));
            }
        }
    }
    DiGraph::new(n, edges).unwrap()
}
