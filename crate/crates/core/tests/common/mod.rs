//! Random graphs and small fixtures shared by the integration tests.
#![allow(dead_code)]

use gsapool_core::graph::Graph;
use gsapool_core::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform entries in `[-1, 1)`; continuous, so ties have probability zero.
pub fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Erdos-Renyi graph with uniform random features.
pub fn random_graph(n: usize, p: f64, dim: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                pairs.push((i, j));
            }
        }
    }
    let x = random_tensor(n, dim, rng);
    Graph::from_undirected(n, pairs, x, 0).unwrap()
}

pub fn random_perm(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Position `i` of the result holds the `i`-th selected node of the
/// original graph, mapped through `perm` and sorted.
pub fn map_selection(sel: &[usize], perm: &[usize]) -> Vec<usize> {
    let mut m: Vec<usize> = sel.iter().map(|&i| perm[i]).collect();
    m.sort_unstable();
    m
}
