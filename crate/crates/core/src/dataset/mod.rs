//! Graph classification datasets: TU-format files, a synthetic motif
//! generator, summary statistics and stratified k-fold plans.

mod folds;
mod synthetic;
mod tu;

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;

pub use folds::{stratified_folds, FoldPlan, Split};
pub use synthetic::{synthetic_motif_dataset, MARKER_FEATURE, SYNTHETIC_FEATURE_DIM};
pub use tu::{find_tu_dataset, load_tu_dataset, write_tu_dataset};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    /// Validates shared feature width and label range.
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        let name = name.into();
        let Some(first) = graphs.first() else {
            return Err(Error::Inconsistent(format!(
                "dataset `{name}` has no graphs"
            )));
        };
        let feature_dim = first.feature_dim();
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::Inconsistent(format!(
                    "graph {i} has feature dim {}, expected {feature_dim}",
                    g.feature_dim()
                )));
            }
            if g.label() >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: g.label(),
                    num_classes,
                });
            }
        }
        Ok(Self {
            name,
            graphs,
            num_classes,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label()] += 1;
        }
        counts
    }

    /// Dataset restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let graphs = indices.iter().map(|&i| self.graphs[i].clone()).collect();
        let mut d = Dataset::new(self.name.clone(), graphs, self.num_classes)?;
        d.feature_dim = self.feature_dim;
        Ok(d)
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.graphs.len() as f64;
        DatasetStats {
            name: self.name.clone(),
            num_graphs: self.graphs.len(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            mean_nodes: self
                .graphs
                .iter()
                .map(|g| g.num_nodes() as f64)
                .sum::<f64>()
                / n,
            mean_edges: self
                .graphs
                .iter()
                .map(|g| g.num_undirected_edges() as f64)
                .sum::<f64>()
                / n,
            class_counts: self.class_counts(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub name: String,
    pub num_graphs: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub mean_nodes: f64,
    /// Undirected edges per graph.
    pub mean_edges: f64,
    pub class_counts: Vec<usize>,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<14} graphs={:<6} classes={} avg_nodes={:.2} avg_edges={:.2} feature_dim={}",
            self.name,
            self.num_graphs,
            self.num_classes,
            self.mean_nodes,
            self.mean_edges,
            self.feature_dim
        )
    }
}

/// Published size statistics of the four benchmark datasets:
/// `(name, graphs, classes, mean nodes, mean undirected edges)`.
pub const REFERENCE_STATS: [(&str, usize, usize, f64, f64); 4] = [
    ("DD", 1178, 2, 284.32, 715.66),
    ("NCI1", 4110, 2, 29.87, 32.30),
    ("NCI109", 4127, 2, 29.68, 32.13),
    ("Mutagenicity", 4337, 2, 30.32, 30.77),
];

/// Maps user spellings such as `NCI-1` or `dd` onto the TU file prefix.
pub fn canonical_name(name: &str) -> String {
    let squashed: String = name.chars().filter(|c| *c != '-' && *c != '_').collect();
    REFERENCE_STATS
        .iter()
        .find(|(n, ..)| n.eq_ignore_ascii_case(&squashed))
        .map_or_else(|| name.to_string(), |(n, ..)| n.to_string())
}

pub fn reference_stats(name: &str) -> Option<(usize, usize, f64, f64)> {
    let canon = canonical_name(name);
    REFERENCE_STATS
        .iter()
        .find(|(n, ..)| *n == canon)
        .map(|&(_, g, c, n, e)| (g, c, n, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn canonical_names() {
        assert_eq!(canonical_name("NCI-1"), "NCI1");
        assert_eq!(canonical_name("nci109"), "NCI109");
        assert_eq!(canonical_name("dd"), "DD");
        assert_eq!(canonical_name("PROTEINS"), "PROTEINS");
        assert_eq!(reference_stats("NCI-1").unwrap().0, 4110);
    }

    #[test]
    fn dataset_rejects_mixed_dims_and_bad_labels() {
        let g1 = Graph::new(1, vec![], Tensor::zeros(1, 2), 0).unwrap();
        let g2 = Graph::new(1, vec![], Tensor::zeros(1, 3), 0).unwrap();
        assert!(Dataset::new("x", vec![g1.clone(), g2], 1).is_err());
        assert!(Dataset::new("x", vec![g1.clone().with_label(2)], 2).is_err());
        assert!(Dataset::new("x", vec![], 2).is_err());
        assert!(Dataset::new("x", vec![g1], 1).is_ok());
    }
}
