use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// One-hot node types; type 0 is the marker.
pub const SYNTHETIC_FEATURE_DIM: usize = 4;
pub const MARKER_FEATURE: usize = 0;

/// `n` random connected graphs of 10 to 20 nodes. A graph is labeled 1
/// iff at least three of its nodes carry the marker type.
///
/// Positives carry 3 to 5 markers and negatives at most one, so the two
/// classes differ in marker count and in marker fraction. Labels alternate
/// before a final shuffle, giving `n / 2` graphs per class (rounded).
pub fn synthetic_motif_dataset(n: usize, seed: u64) -> Result<Dataset> {
    if n < 20 {
        return Err(Error::Config(format!(
            "synthetic dataset needs n >= 20, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 1;
        let size = rng.gen_range(10..=20);
        let markers = if positive {
            rng.gen_range(3..=5)
        } else {
            rng.gen_range(0..=1)
        };
        let mut types: Vec<usize> = (0..size)
            .map(|k| {
                if k < markers {
                    MARKER_FEATURE
                } else {
                    rng.gen_range(1..SYNTHETIC_FEATURE_DIM)
                }
            })
            .collect();
        types.shuffle(&mut rng);

        // random spanning tree plus a few chords
        let mut pairs: Vec<(usize, usize)> = (1..size).map(|v| (rng.gen_range(0..v), v)).collect();
        for _ in 0..size / 4 {
            let (a, b) = (rng.gen_range(0..size), rng.gen_range(0..size));
            pairs.push((a, b));
        }

        let mut x = Tensor::zeros(size, SYNTHETIC_FEATURE_DIM);
        for (v, &t) in types.iter().enumerate() {
            x.set(v, t, 1.0);
        }
        graphs.push(Graph::from_undirected(size, pairs, x, positive as usize)?);
    }
    graphs.shuffle(&mut rng);
    Dataset::new("synthetic", graphs, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marker_count(g: &Graph) -> usize {
        (0..g.num_nodes())
            .filter(|&v| g.features().get(v, MARKER_FEATURE) == 1.0)
            .count()
    }

    #[test]
    fn balanced_and_labeled_by_marker_count() {
        let d = synthetic_motif_dataset(100, 7).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(d.class_counts(), vec![50, 50]);
        for g in &d.graphs {
            assert!((10..=20).contains(&g.num_nodes()));
            assert_eq!(g.label(), (marker_count(g) >= 3) as usize);
        }
    }

    #[test]
    fn shared_feature_dim() {
        let d = synthetic_motif_dataset(20, 1).unwrap();
        assert!(d
            .graphs
            .iter()
            .all(|g| g.feature_dim() == SYNTHETIC_FEATURE_DIM));
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            synthetic_motif_dataset(30, 3).unwrap(),
            synthetic_motif_dataset(30, 3).unwrap()
        );
        assert_ne!(
            synthetic_motif_dataset(30, 3).unwrap(),
            synthetic_motif_dataset(30, 4).unwrap()
        );
    }

    #[test]
    fn rejects_small_n() {
        assert!(synthetic_motif_dataset(19, 0).is_err());
    }

    #[test]
    fn graphs_are_connected() {
        for g in synthetic_motif_dataset(40, 2).unwrap().graphs {
            let nbrs = g.neighbors();
            let mut seen = vec![false; g.num_nodes()];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for &u in &nbrs[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }
}
