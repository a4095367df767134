//! Graph collections in the TUDataset text layout.
//!
//! Each graph is held as an unweighted, undirected CSR adjacency plus a dense
//! node-feature matrix. Node labels become one-hot features; datasets without
//! node labels fall back to a single normalized-degree feature.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SplitMix64};

#[derive(Clone, Debug, PartialEq)]
pub struct GraphCsr {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    features: DenseMatrix,
    label: usize,
}

impl GraphCsr {
    /// Builds a graph from an edge list. Every edge is inserted in both
    /// directions; repeated edges collapse to one entry.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: DenseMatrix,
        label: usize,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) outside 0..{num_nodes}"
                )));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut row_ptr = Vec::with_capacity(num_nodes + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut nbrs in adjacency {
            nbrs.sort_unstable();
            nbrs.dedup();
            col_idx.extend(nbrs);
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            num_nodes,
            row_ptr,
            col_idx,
            features,
            label,
        })
    }

    /// Takes CSR arrays verbatim and checks every structural invariant.
    pub fn from_csr(
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        features: DenseMatrix,
        label: usize,
    ) -> Result<Self> {
        let num_nodes = row_ptr.len().checked_sub(1).ok_or_else(|| {
            Error::InvalidGraph("row_ptr must have at least one entry".into())
        })?;
        let g = Self {
            num_nodes,
            row_ptr,
            col_idx,
            features,
            label,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_dense_adjacency(adj: &DenseMatrix, features: DenseMatrix, label: usize) -> Result<Self> {
        let n = adj.rows();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        for i in 0..n {
            col_idx.extend((0..adj.cols()).filter(|&j| adj[(i, j)] != 0.0));
            row_ptr.push(col_idx.len());
        }
        Self::from_csr(row_ptr, col_idx, features, label)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.row_ptr.len() != n + 1 || self.row_ptr[0] != 0 {
            return Err(Error::InvalidGraph("malformed row_ptr".into()));
        }
        if self.row_ptr[n] != self.col_idx.len() {
            return Err(Error::InvalidGraph("row_ptr[N] != nnz".into()));
        }
        if self.features.rows() != n {
            return Err(Error::InvalidGraph("feature row count != N".into()));
        }
        for i in 0..n {
            if self.row_ptr[i] > self.row_ptr[i + 1] {
                return Err(Error::InvalidGraph("row_ptr decreases".into()));
            }
            let row = self.neighbors(i);
            if row.iter().any(|&j| j >= n) {
                return Err(Error::InvalidGraph(format!("row {i} has column >= N")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGraph(format!("row {i} not strictly increasing")));
            }
        }
        for i in 0..n {
            for &j in self.neighbors(i) {
                if self.neighbors(j).binary_search(&i).is_err() {
                    return Err(Error::InvalidGraph(format!("edge ({i}, {j}) has no reverse")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Stored (directed) adjacency entries; an undirected edge counts twice.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    #[inline]
    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    #[inline]
    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn label(&self) -> usize {
        self.label
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    pub fn to_dense_adjacency(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.num_nodes, self.num_nodes);
        for i in 0..self.num_nodes {
            for &j in self.neighbors(i) {
                a[(i, j)] = 1.0;
            }
        }
        a
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<GraphCsr>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Original graph-label values; class id `c` corresponds to `class_values[c]`.
    pub class_values: Vec<i64>,
    /// Original node-label values behind the one-hot columns, if any.
    pub node_label_values: Option<Vec<i64>>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DatasetStats {
    pub name: String,
    pub graphs: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub avg_nodes: f64,
    /// Undirected edges, i.e. stored entries / 2.
    pub avg_edges: f64,
    pub class_counts: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(GraphCsr::label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label()] += 1;
        }
        counts
    }

    /// Graphs at `indices`, in that order, sharing this dataset's metadata.
    pub fn subset(&self, indices: &[usize], suffix: &str) -> Dataset {
        Dataset {
            name: format!("{}{suffix}", self.name),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            class_values: self.class_values.clone(),
            node_label_values: self.node_label_values.clone(),
        }
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.graphs.len().max(1) as f64;
        DatasetStats {
            name: self.name.clone(),
            graphs: self.graphs.len(),
            classes: self.num_classes,
            feature_dim: self.feature_dim,
            avg_nodes: self.graphs.iter().map(|g| g.num_nodes() as f64).sum::<f64>() / n,
            avg_edges: self.graphs.iter().map(|g| g.nnz() as f64 / 2.0).sum::<f64>() / n,
            class_counts: self.class_counts(),
        }
    }
}

struct IntFile {
    name: String,
    rows: Vec<(usize, Vec<i64>)>,
}

fn read_int_file(path: &Path) -> Result<IntFile> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<i64>().map_err(|_| Error::Parse {
                    file: name.clone(),
                    line: lineno + 1,
                    msg: format!("expected integer, found {t:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((lineno + 1, values));
    }
    Ok(IntFile { name, rows })
}

impl IntFile {
    fn column(&self, width: usize) -> Result<Vec<(usize, Vec<i64>)>> {
        for (line, vals) in &self.rows {
            if vals.len() != width {
                return Err(Error::Parse {
                    file: self.name.clone(),
                    line: *line,
                    msg: format!("expected {width} value(s), found {}", vals.len()),
                });
            }
        }
        Ok(self.rows.clone())
    }

    fn scalars(&self) -> Result<Vec<(usize, i64)>> {
        Ok(self.column(1)?.into_iter().map(|(l, v)| (l, v[0])).collect())
    }
}

fn path_for(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Loads `<name>_A.txt`, `<name>_graph_indicator.txt`,
/// `<name>_graph_labels.txt` and, when present, `<name>_node_labels.txt`.
pub fn load_tudataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    let edges = read_int_file(&path_for(dir, name, "A"))?;
    let indicator = read_int_file(&path_for(dir, name, "graph_indicator"))?;
    let graph_labels = read_int_file(&path_for(dir, name, "graph_labels"))?;
    let node_labels_path = path_for(dir, name, "node_labels");
    let node_labels = if node_labels_path.exists() {
        Some(read_int_file(&node_labels_path)?)
    } else {
        None
    };

    let graph_labels = graph_labels.scalars()?;
    let num_graphs = graph_labels.len();
    if num_graphs == 0 {
        return Err(Error::InvalidGraph(format!("{name}: no graphs")));
    }

    // Node -> (graph, local index)
    let indicator_rows = indicator.scalars()?;
    let total_nodes = indicator_rows.len();
    let mut node_graph = Vec::with_capacity(total_nodes);
    let mut node_local = Vec::with_capacity(total_nodes);
    let mut sizes = vec![0usize; num_graphs];
    for &(line, gid) in &indicator_rows {
        if gid < 1 || gid as usize > num_graphs {
            return Err(Error::Parse {
                file: indicator.name.clone(),
                line,
                msg: format!("graph id {gid} outside 1..={num_graphs}"),
            });
        }
        let g = gid as usize - 1;
        node_graph.push(g);
        node_local.push(sizes[g]);
        sizes[g] += 1;
    }

    let mut graph_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, pair) in edges.column(2)? {
        let node = |id: i64| -> Result<usize> {
            if id < 1 || id as usize > total_nodes {
                return Err(Error::Parse {
                    file: edges.name.clone(),
                    line,
                    msg: format!("node id {id} outside 1..={total_nodes}"),
                });
            }
            Ok(id as usize - 1)
        };
        let (u, v) = (node(pair[0])?, node(pair[1])?);
        if node_graph[u] != node_graph[v] {
            return Err(Error::Parse {
                file: edges.name.clone(),
                line,
                msg: format!(
                    "edge ({}, {}) crosses graphs {} and {}",
                    pair[0],
                    pair[1],
                    node_graph[u] + 1,
                    node_graph[v] + 1
                ),
            });
        }
        graph_edges[node_graph[u]].push((node_local[u], node_local[v]));
    }

    let node_label_rows = match &node_labels {
        Some(f) => {
            let rows = f.scalars()?;
            if rows.len() != total_nodes {
                return Err(Error::Parse {
                    file: f.name.clone(),
                    line: rows.len(),
                    msg: format!("{} node labels for {total_nodes} nodes", rows.len()),
                });
            }
            Some(rows.into_iter().map(|(_, v)| v).collect::<Vec<_>>())
        }
        None => None,
    };

    let class_values: Vec<i64> = graph_labels
        .iter()
        .map(|&(_, v)| v)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_of = |v: i64| class_values.binary_search(&v).expect("collected above");

    // Global node id ranges per graph, in file order.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    for (node, &g) in node_graph.iter().enumerate() {
        members[g].push(node);
    }

    let (feature_dim, node_label_values) = match &node_label_rows {
        Some(labels) => {
            let vocab: Vec<i64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            (vocab.len(), Some(vocab))
        }
        None => (1, None),
    };

    let mut graphs = Vec::with_capacity(num_graphs);
    for g in 0..num_graphs {
        let n = sizes[g];
        let label = class_of(graph_labels[g].1);
        let features = match (&node_label_rows, &node_label_values) {
            (Some(labels), Some(vocab)) => {
                let mut f = DenseMatrix::zeros(n, feature_dim);
                for (local, &node) in members[g].iter().enumerate() {
                    let col = vocab.binary_search(&labels[node]).expect("in vocab");
                    f[(local, col)] = 1.0;
                }
                f
            }
            _ => DenseMatrix::zeros(n, 1),
        };
        let graph = GraphCsr::from_edges(n, &graph_edges[g], features, label)?;
        graphs.push(graph);
    }

    if node_label_rows.is_none() {
        let max_degree = graphs
            .iter()
            .flat_map(|g| (0..g.num_nodes()).map(move |i| g.neighbors(i).len()))
            .max()
            .unwrap_or(0);
        let scale = if max_degree > 0 { 1.0 / max_degree as f64 } else { 0.0 };
        for g in &mut graphs {
            for i in 0..g.num_nodes {
                g.features[(i, 0)] = g.neighbors(i).len() as f64 * scale;
            }
        }
    }

    Ok(Dataset {
        name: name.to_string(),
        graphs,
        num_classes: class_values.len(),
        feature_dim,
        class_values,
        node_label_values,
    })
}

/// Deterministic shuffled train/test partition with
/// `|test| = round(test_fraction * n)`, clamped so both sides are nonempty.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} not in (0, 1)"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split a dataset of {n} graph(s)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (test_idx, train_idx) = order.split_at(n_test);
    Ok((ds.subset(train_idx, "-train"), ds.subset(test_idx, "-test")))
}
