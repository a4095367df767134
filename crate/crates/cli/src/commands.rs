use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nystrom_hdc::model::ModelSummary;
use nystrom_hdc::perfmodel::{perf_report, roofline, REPORT_SCHEMA};
use nystrom_hdc::{
    evaluate, load_model, predict, save_model, train, Dataset, InferOptions, MachineParams, OpCounter,
    SplitMix64, TrainedModel,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::graph_file::read_graph;
use crate::UsageError;

pub fn envelope(command: &str, body: Value) -> Value {
    let mut v = json!({ "schema": REPORT_SCHEMA, "command": command });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    v
}

/// Refuses datasets whose one-hot columns mean something else than the
/// model's.
pub fn check_compatible(ds: &Dataset, m: &TrainedModel) -> Result<()> {
    if ds.feature_dim != m.feature_dim() {
        return Err(nystrom_hdc::Error::DimensionMismatch(format!(
            "dataset has {} features, model expects {}",
            ds.feature_dim,
            m.feature_dim()
        ))
        .into());
    }
    if ds.node_label_values.as_deref() != m.node_label_values() {
        bail!(
            "dataset node-label vocabulary {:?} differs from the model's {:?}",
            ds.node_label_values,
            m.node_label_values()
        );
    }
    Ok(())
}

pub fn train_model(cfg: &RunConfig, train_set: &Dataset) -> Result<TrainedModel> {
    Ok(train(train_set, &cfg.model, &mut SplitMix64::new(cfg.seed))?)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let (train_set, test_set) = cfg.load_split()?;
    let t0 = Instant::now();
    let m = train_model(cfg, &train_set)?;
    let wall = t0.elapsed().as_secs_f64();
    save_model(&m, out)?;
    let file_bytes = fs::metadata(out).map(|md| md.len()).unwrap_or(0);
    log::info!("trained in {wall:.2}s, wrote {}", out.display());
    let s = m.summary();
    Ok(envelope(
        "train",
        json!({
            "model_path": out,
            "train_graphs": train_set.len(),
            "test_graphs": test_set.len(),
            "landmarks": s.landmarks,
            "landmark_method": s.landmark_method,
            "codebook_sizes": s.codebook_sizes,
            "parameter_bytes": s.parameter_bytes,
            "parameter_accounting": s.parameter_accounting,
            "model_file_bytes": file_bytes,
            "wall_time_s": wall,
            "config": cfg,
        }),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    Train,
    Test,
    All,
}

pub fn cmd_eval(cfg: &RunConfig, model_path: &Path, subset: Subset, opts: &InferOptions) -> Result<Value> {
    let m = load_model(model_path)?;
    let ds = match subset {
        Subset::All => cfg.load_dataset()?,
        Subset::Train => cfg.load_split()?.0,
        Subset::Test => cfg.load_split()?.1,
    };
    check_compatible(&ds, &m)?;
    let r = evaluate(&ds, &m, opts)?;
    Ok(envelope(
        "eval",
        json!({
            "model_path": model_path,
            "subset": format!("{subset:?}").to_lowercase(),
            "above_majority_baseline": r.accuracy > r.majority_baseline,
            "report": r,
            "options": opts,
        }),
    ))
}

pub enum InferInput {
    GraphFile(PathBuf),
    DatasetIndex(RunConfig, usize),
}

pub fn cmd_infer(model_path: &Path, input: InferInput, opts: &InferOptions) -> Result<Value> {
    let m = load_model(model_path)?;
    let (g, source, truth) = match input {
        InferInput::GraphFile(p) => (read_graph(&p, &m)?, json!(p), None),
        InferInput::DatasetIndex(cfg, i) => {
            let ds = cfg.load_dataset()?;
            check_compatible(&ds, &m)?;
            let Some(g) = ds.graphs.get(i) else {
                return Err(UsageError(format!("graph index {i} out of range (dataset has {})", ds.len())).into());
            };
            let truth = ds.class_values[g.label()];
            (g.clone(), json!({ "dataset": cfg.dataset, "index": i }), Some(truth))
        }
    };
    let mut counter = OpCounter::default();
    let t0 = Instant::now();
    let (class, scores) = predict(&g, &m, opts, &mut counter)?;
    let latency_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(envelope(
        "infer",
        json!({
            "source": source,
            "nodes": g.num_nodes(),
            "predicted_class": class,
            "predicted_label": m.class_values()[class],
            "true_label": truth,
            "scores": scores,
            "latency_ms": latency_ms,
            "ops": counter.as_ops(),
            "lookup_probes": counter.lookup_probes,
        }),
    ))
}

pub fn read_machine(path: Option<&Path>) -> Result<MachineParams> {
    match path {
        None => Ok(MachineParams::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading machine block {}", p.display()))?;
            Ok(serde_json::from_str(&text).map_err(|e| UsageError(format!("machine block {}: {e}", p.display())))?)
        }
    }
}

pub fn cmd_model_info(model_path: &Path, machine: &MachineParams, shape: Option<(usize, usize)>) -> Result<Value> {
    let m = load_model(model_path)?;
    let s: ModelSummary = m.summary();
    let keys: usize = s.mph.iter().map(|t| t.num_keys).sum();
    let level_bits: u64 = s.mph.iter().map(|t| t.level_bits).sum();
    let rank_bits: u64 = s.mph.iter().map(|t| t.rank_bits).sum();
    let mut body = json!({
        "model_path": model_path,
        "summary": s,
        "mph_level_bits_per_key": level_bits as f64 / keys.max(1) as f64,
        "mph_total_bits_per_key": (level_bits + rank_bits) as f64 / keys.max(1) as f64,
        "projection_share_of_parameters": s.parameter_accounting.projection_share_of_parameters,
        "machine": machine,
        "roofline": roofline(machine),
    });
    if let Some((nodes, edges)) = shape {
        let w = m.workload_shape(nodes, 2 * edges);
        body["workload_report"] = serde_json::to_value(perf_report(&w, machine))?;
    }
    Ok(envelope("model-info", body))
}

pub fn cmd_dataset_info(cfg: &RunConfig) -> Result<Value> {
    let ds = cfg.load_dataset()?;
    let (train_set, test_set) = nystrom_hdc::split(&ds, cfg.test_fraction, cfg.seed)?;
    Ok(envelope(
        "dataset-info",
        json!({
            "stats": ds.stats(),
            "class_values": ds.class_values,
            "node_label_values": ds.node_label_values,
            "split": { "test_fraction": cfg.test_fraction, "seed": cfg.seed, "train": train_set.len(), "test": test_set.len() },
        }),
    ))
}
