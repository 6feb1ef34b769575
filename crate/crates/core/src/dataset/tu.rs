use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;

use super::{canonical_name, Dataset};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::Graph;

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn parse_int(path: &Path, line: usize, s: &str) -> Result<i64> {
    s.trim().parse().map_err(|_| Error::Parse {
        file: path.to_path_buf(),
        line,
        msg: format!("expected an integer, got `{s}`"),
    })
}

fn parse_column(path: &Path) -> Result<Vec<i64>> {
    read_lines(path)?
        .iter()
        .map(|(n, l)| parse_int(path, *n, l))
        .collect()
}

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Reads `NAME_A.txt`, `NAME_graph_indicator.txt`, `NAME_graph_labels.txt`
/// and, when present, `NAME_node_labels.txt` from `dir`.
///
/// Node labels become one-hot features over the distinct labels in sorted
/// order; without a node-label file every node gets the scalar feature 1.
/// Graph labels are remapped to `0..num_classes` in sorted order.
pub fn load_tu_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let name = canonical_name(name);
    let a_path = file(dir, &name, "A");
    let ind_path = file(dir, &name, "graph_indicator");
    let gl_path = file(dir, &name, "graph_labels");
    let nl_path = file(dir, &name, "node_labels");
    for p in [&a_path, &ind_path, &gl_path] {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
    }

    let indicator = parse_column(&ind_path)?;
    let graph_labels = parse_column(&gl_path)?;
    let num_graphs = graph_labels.len();
    let num_nodes = indicator.len();

    // graph id (0-based) and local index of every global node
    let mut sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(num_nodes);
    let mut owner = Vec::with_capacity(num_nodes);
    for (n, &gid) in indicator.iter().enumerate() {
        if gid < 1 || gid as usize > num_graphs {
            return Err(Error::Parse {
                file: ind_path.clone(),
                line: n + 1,
                msg: format!("graph id {gid} outside 1..={num_graphs}"),
            });
        }
        let g = gid as usize - 1;
        owner.push(g);
        local.push(sizes[g]);
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Inconsistent(format!(
            "graph {} has no nodes in {}",
            g + 1,
            ind_path.display()
        )));
    }

    let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    let mut directed = HashSet::new();
    for (line, text) in read_lines(&a_path)? {
        let mut parts = text.split(',');
        let (Some(i), Some(j), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                file: a_path.clone(),
                line,
                msg: format!("expected `i, j`, got `{text}`"),
            });
        };
        let (i, j) = (parse_int(&a_path, line, i)?, parse_int(&a_path, line, j)?);
        for v in [i, j] {
            if v < 1 || v as usize > num_nodes {
                return Err(Error::Parse {
                    file: a_path.clone(),
                    line,
                    msg: format!("node {v} outside 1..={num_nodes}"),
                });
            }
        }
        let (i, j) = (i as usize - 1, j as usize - 1);
        if owner[i] != owner[j] {
            return Err(Error::Parse {
                file: a_path.clone(),
                line,
                msg: format!(
                    "edge ({}, {}) joins graph {} and graph {}",
                    i + 1,
                    j + 1,
                    owner[i] + 1,
                    owner[j] + 1
                ),
            });
        }
        directed.insert((i, j));
        pairs[owner[i]].push((local[i], local[j]));
    }
    let one_way = directed
        .iter()
        .filter(|&&(i, j)| i != j && !directed.contains(&(j, i)))
        .count();
    if one_way > 0 {
        warn!("{name}: {one_way} edges listed in one direction only; symmetrizing");
    }

    let node_labels = if nl_path.exists() {
        let labels = parse_column(&nl_path)?;
        if labels.len() != num_nodes {
            return Err(Error::Inconsistent(format!(
                "{} node labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        Some(labels)
    } else {
        None
    };
    let label_index: BTreeMap<i64, usize> = node_labels
        .iter()
        .flatten()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    let feature_dim = if node_labels.is_some() {
        label_index.len()
    } else {
        1
    };

    let class_index: BTreeMap<i64, usize> = graph_labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();

    let mut features: Vec<Tensor> = sizes
        .iter()
        .map(|&s| match node_labels {
            Some(_) => Tensor::zeros(s, feature_dim),
            None => Tensor::full(s, 1, 1.0),
        })
        .collect();
    if let Some(labels) = &node_labels {
        for (n, l) in labels.iter().enumerate() {
            features[owner[n]].set(local[n], label_index[l], 1.0);
        }
    }

    let graphs = features
        .into_iter()
        .zip(pairs)
        .enumerate()
        .map(|(g, (x, p))| Graph::from_undirected(sizes[g], p, x, class_index[&graph_labels[g]]))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(name, graphs, class_index.len())
}

/// Loads `name` from `root/NAME/` (the layout of the public archive) or,
/// failing that, from `root` itself.
pub fn find_tu_dataset(root: &Path, name: &str) -> Result<Dataset> {
    let canon = canonical_name(name);
    let nested = root.join(&canon);
    if file(&nested, &canon, "A").exists() {
        load_tu_dataset(&nested, &canon)
    } else {
        load_tu_dataset(root, &canon)
    }
}

/// Writes `d` in TU format under `dir` using `d.name` as file prefix.
/// Node features must be one-hot rows; their hot column is written as the
/// node label. Graph labels are written as class indices.
pub fn write_tu_dataset(dir: &Path, d: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let open = |suffix: &str| -> Result<BufWriter<fs::File>> {
        Ok(BufWriter::new(fs::File::create(file(
            dir, &d.name, suffix,
        ))?))
    };
    let (mut a, mut ind, mut gl, mut nl) = (
        open("A")?,
        open("graph_indicator")?,
        open("graph_labels")?,
        open("node_labels")?,
    );
    let mut offset = 0;
    for (gi, g) in d.graphs.iter().enumerate() {
        for &(i, j) in g.edges() {
            writeln!(a, "{}, {}", offset + i + 1, offset + j + 1)?;
        }
        for r in 0..g.num_nodes() {
            writeln!(ind, "{}", gi + 1)?;
            let row = g.features().row_slice(r);
            let hot = row.iter().position(|&v| v == 1.0);
            match hot {
                Some(h) if row.iter().filter(|&&v| v != 0.0).count() == 1 => writeln!(nl, "{h}")?,
                _ => {
                    return Err(Error::Inconsistent(format!(
                        "graph {gi} node {r}: features are not one-hot"
                    )))
                }
            }
        }
        writeln!(gl, "{}", g.label())?;
        offset += g.num_nodes();
    }
    for w in [&mut a, &mut ind, &mut gl, &mut nl] {
        w.flush()?;
    }
    Ok(())
}
