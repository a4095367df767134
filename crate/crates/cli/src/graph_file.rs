//! Single-graph JSON input for `infer`:
//!
//! ```json
//! {"edges": [[0, 1], [1, 2]], "node_labels": [6, 0, 0]}
//! ```
//!
//! `node_labels` are original dataset values and are one-hot encoded with
//! the model's vocabulary; `features` (one row per node) may be given
//! instead. `num_nodes` is optional when either is present.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nystrom_hdc::{DenseMatrix, GraphCsr, TrainedModel};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    num_nodes: Option<usize>,
    #[serde(default)]
    edges: Vec<[usize; 2]>,
    node_labels: Option<Vec<i64>>,
    features: Option<Vec<Vec<f64>>>,
}

pub fn read_graph(path: &Path, model: &TrainedModel) -> Result<GraphCsr> {
    let text = fs::read_to_string(path).with_context(|| format!("reading graph {}", path.display()))?;
    let gf: GraphFile = serde_json::from_str(&text).with_context(|| format!("parsing graph {}", path.display()))?;
    to_graph(gf, model)
}

fn to_graph(gf: GraphFile, model: &TrainedModel) -> Result<GraphCsr> {
    let f = model.feature_dim();
    let features = match (&gf.node_labels, &gf.features) {
        (Some(_), Some(_)) => bail!("give either node_labels or features, not both"),
        (Some(labels), None) => {
            let vocab = model
                .node_label_values()
                .ok_or_else(|| anyhow!("model was trained without node labels; pass features"))?;
            let cols = labels
                .iter()
                .map(|l| {
                    vocab
                        .iter()
                        .position(|v| v == l)
                        .ok_or_else(|| anyhow!("node label {l} not in the model vocabulary {vocab:?}"))
                })
                .collect::<Result<Vec<_>>>()?;
            DenseMatrix::from_fn(cols.len(), f, |i, j| if cols[i] == j { 1.0 } else { 0.0 })
        }
        (None, Some(rows)) => {
            if let Some(r) = rows.iter().find(|r| r.len() != f) {
                bail!("feature row of length {}, model expects {f}", r.len());
            }
            DenseMatrix::from_rows(rows)?
        }
        (None, None) => {
            let n = gf.num_nodes.ok_or_else(|| anyhow!("graph needs num_nodes, node_labels or features"))?;
            DenseMatrix::zeros(n, f)
        }
    };
    if let Some(n) = gf.num_nodes {
        if n != features.rows() {
            bail!("num_nodes {n} but {} feature rows", features.rows());
        }
    }
    let edges: Vec<(usize, usize)> = gf.edges.iter().map(|e| (e[0], e[1])).collect();
    Ok(GraphCsr::from_edges(features.rows(), &edges, features, 0)?)
}
