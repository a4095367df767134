//! Seeded synthetic graphs and matrices for tests, benches and demos.

use std::collections::BTreeSet;

use crate::dataset::{Dataset, GraphCsr};
use crate::linalg::{DenseMatrix, SplitMix64};
use crate::schedule::SparseMatrixCsr;

fn one_hot(rows: &[usize], f: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows.len(), f, |i, j| if rows[i] == j { 1.0 } else { 0.0 })
}

/// Erdős–Rényi graph with uniformly random one-hot node labels.
pub fn random_graph(rng: &mut SplitMix64, n: usize, edge_prob: f64, f: usize, label: usize) -> GraphCsr {
    let labels: Vec<usize> = (0..n).map(|_| rng.below(f as u64) as usize).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.next_f64() < edge_prob {
                edges.push((u, v));
            }
        }
    }
    GraphCsr::from_edges(n, &edges, one_hot(&labels, f), label).expect("valid by construction")
}

/// Random graph with real-valued Gaussian features instead of one-hot ones.
pub fn random_graph_dense_features(
    rng: &mut SplitMix64,
    n: usize,
    edge_prob: f64,
    f: usize,
) -> GraphCsr {
    let g = random_graph(rng, n, edge_prob, f, 0);
    let feats = DenseMatrix::from_fn(n, f, |_, _| rng.next_gaussian());
    GraphCsr::from_csr(g.row_ptr().to_vec(), g.col_idx().to_vec(), feats, 0).expect("valid")
}

/// A learnable multi-class set: class `c` graphs favour node label `c mod f`
/// and get denser with `c`.
pub fn labeled_dataset(
    rng: &mut SplitMix64,
    num_graphs: usize,
    classes: usize,
    f: usize,
    nodes: (usize, usize),
) -> Dataset {
    let graphs = (0..num_graphs)
        .map(|i| {
            let c = i % classes;
            let n = nodes.0 + rng.below((nodes.1 - nodes.0 + 1) as u64) as usize;
            let p = 0.15 + 0.25 * c as f64 / classes.max(2) as f64;
            let labels: Vec<usize> = (0..n)
                .map(|_| {
                    if rng.next_f64() < 0.7 {
                        c % f
                    } else {
                        rng.below(f as u64) as usize
                    }
                })
                .collect();
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.next_f64() < p {
                        edges.push((u, v));
                    }
                }
            }
            GraphCsr::from_edges(n, &edges, one_hot(&labels, f), c).expect("valid")
        })
        .collect();
    Dataset {
        name: "synthetic".into(),
        graphs,
        num_classes: classes,
        feature_dim: f,
        class_values: (0..classes as i64).collect(),
        node_label_values: Some((0..f as i64).collect()),
    }
}

/// `clusters` template graphs, each repeated `per_cluster` times verbatim,
/// so the pairwise kernel is near block-rank-one. Class = cluster mod 2.
pub fn clustered_dataset(
    rng: &mut SplitMix64,
    clusters: usize,
    per_cluster: usize,
    nodes: usize,
    f: usize,
) -> Dataset {
    let mut graphs = Vec::with_capacity(clusters * per_cluster);
    for c in 0..clusters {
        let p = 0.1 + 0.4 * rng.next_f64();
        let template = random_graph(rng, nodes, p, f, c % 2);
        for _ in 0..per_cluster {
            graphs.push(template.clone());
        }
    }
    rng.shuffle(&mut graphs);
    Dataset {
        name: "clustered".into(),
        graphs,
        num_classes: 2.min(clusters).max(1),
        feature_dim: f,
        class_values: vec![0, 1],
        node_label_values: Some((0..f as i64).collect()),
    }
}

/// Row nnz follows `max_nnz / rank^alpha` over a random row order; columns
/// are distinct uniform picks, values 1.
pub fn power_law_matrix(
    rng: &mut SplitMix64,
    rows: usize,
    cols: usize,
    alpha: f64,
    max_nnz: usize,
) -> SparseMatrixCsr {
    let mut order: Vec<usize> = (0..rows).collect();
    rng.shuffle(&mut order);
    let mut nnz = vec![0usize; rows];
    for (rank, &r) in order.iter().enumerate() {
        let k = (max_nnz as f64 / ((rank + 1) as f64).powf(alpha)).ceil() as usize;
        nnz[r] = k.clamp(1, cols);
    }
    let entries: Vec<Vec<(usize, f64)>> = nnz
        .iter()
        .map(|&k| {
            let mut set = BTreeSet::new();
            while set.len() < k {
                set.insert(rng.below(cols as u64) as usize);
            }
            set.into_iter().map(|c| (c, 1.0)).collect()
        })
        .collect();
    SparseMatrixCsr::from_rows(cols, &entries).expect("valid")
}

/// Hub-and-spoke graph: `hubs` nodes each join a `hub_prob` fraction of the
/// rest, everything else is a sparse ring. Gives a very skewed degree profile.
pub fn skewed_graph(rng: &mut SplitMix64, n: usize, hubs: usize, hub_prob: f64, f: usize) -> GraphCsr {
    let labels: Vec<usize> = (0..n).map(|_| rng.below(f as u64) as usize).collect();
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).filter(|&(a, b)| a != b).collect();
    for h in 0..hubs.min(n) {
        for v in 0..n {
            if v != h && rng.next_f64() < hub_prob {
                edges.push((h, v));
            }
        }
    }
    GraphCsr::from_edges(n, &edges, one_hot(&labels, f), 0).expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::SparseRows;

    #[test]
    fn deterministic_and_valid() {
        let a = random_graph(&mut SplitMix64::new(1), 20, 0.3, 4, 0);
        let b = random_graph(&mut SplitMix64::new(1), 20, 0.3, 4, 0);
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn labeled_dataset_shape() {
        let ds = labeled_dataset(&mut SplitMix64::new(3), 30, 3, 5, (5, 12));
        assert_eq!(ds.len(), 30);
        assert_eq!(ds.class_counts(), vec![10, 10, 10]);
    }

    #[test]
    fn power_law_is_skewed() {
        let m = power_law_matrix(&mut SplitMix64::new(5), 256, 256, 1.0, 128);
        let max = (0..256).map(|r| m.row_nnz(r)).max().unwrap();
        assert_eq!(max, 128);
        assert!(m.total_nnz() < 256 * 16);
    }
}
