use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{Hypervector, TrainedModel};
use crate::dataset::{Dataset, GraphCsr};
use crate::error::{Error, Result};
use crate::perfmodel::OpCounter;
use crate::propkernel::{baseline_all_hops, restructured_hop, quantize, CodePath};
use crate::schedule::{build_schedule, spmv_scheduled, spmv_scheduled_parallel, ScheduleTable, SparseRows};

/// Graphs at least this large run their lanes on the thread pool; smaller
/// ones step the lanes in order, which gives the same bits.
const PARALLEL_MIN_ROWS: usize = 2048;

/// How a code is mapped to its histogram bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LookupEngine {
    #[default]
    Mph,
    BinarySearch,
    HashMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct InferOptions {
    pub lanes: usize,
    /// Schedule SpMV rows by nnz; otherwise lanes take contiguous blocks.
    pub load_balance: bool,
    pub code_path: CodePath,
    pub lookup: LookupEngine,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            lanes: 4,
            load_balance: true,
            code_path: CodePath::Restructured,
            lookup: LookupEngine::Mph,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub hv: Hypervector,
    /// `Σ_t H^(t) h^(t)`: kernel value against every landmark.
    pub kernel_vec: Vec<f64>,
}

fn schedule_for<M: SparseRows + ?Sized>(m: &M, opts: &InferOptions) -> Result<ScheduleTable> {
    if opts.load_balance {
        build_schedule(m, opts.lanes)
    } else {
        ScheduleTable::contiguous(m.num_rows(), opts.lanes)
    }
}

fn run_spmv<M: SparseRows + Sync + ?Sized>(m: &M, x: &[f64], sched: &ScheduleTable) -> Result<Vec<f64>> {
    if sched.num_lanes() > 1 && m.num_rows() >= PARALLEL_MIN_ROWS {
        spmv_scheduled_parallel(m, x, sched)
    } else {
        spmv_scheduled(m, x, sched)
    }
}

/// Every lane counts its slice of nodes into a private histogram; the
/// copies are then summed in ascending lane order.
fn lane_histogram(
    model: &TrainedModel,
    t: usize,
    codes: &[i64],
    opts: &InferOptions,
    counter: &mut OpCounter,
) -> Vec<u32> {
    let bins = model.codebook.len(t);
    let lanes = opts.lanes.max(1);
    let chunk = codes.len().div_ceil(lanes).max(1);
    let count_lane = |slice: &[i64]| -> (Vec<u32>, u64) {
        let mut h = vec![0u32; bins];
        let mut probes = 0u64;
        for &c in slice {
            let bin = match opts.lookup {
                LookupEngine::Mph => {
                    let (b, p) = model.mph[t].lookup_with_probes(c);
                    probes += p as u64;
                    b
                }
                LookupEngine::BinarySearch => {
                    probes += 1;
                    model.codebook.index(t, c)
                }
                LookupEngine::HashMap => {
                    probes += 1;
                    model.code_maps[t].get(&c).map(|&i| i as usize)
                }
            };
            if let Some(b) = bin {
                h[b] += 1;
            }
        }
        (h, probes)
    };
    let partials: Vec<(Vec<u32>, u64)> = if lanes > 1 && codes.len() >= PARALLEL_MIN_ROWS {
        codes.par_chunks(chunk).map(count_lane).collect()
    } else {
        codes.chunks(chunk).map(count_lane).collect()
    };
    let mut hist = vec![0u32; bins];
    for (h, p) in partials {
        counter.lookup_probes += p;
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
    }
    hist
}

fn hop_codes(
    g: &GraphCsr,
    model: &TrainedModel,
    opts: &InferOptions,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<i64>>> {
    match opts.code_path {
        CodePath::Baseline => baseline_all_hops(g, &model.lsh, counter),
        CodePath::Restructured => {
            let sched = schedule_for(g, opts)?;
            (0..model.hops())
                .map(|t| {
                    let v = restructured_hop(g, &model.lsh, t, counter, |c| run_spmv(g, c, &sched))?;
                    v.into_iter().map(quantize).collect()
                })
                .collect()
        }
    }
}

/// Encodes one graph; fills `counter` with the work actually performed.
pub fn encode_counted(
    g: &GraphCsr,
    model: &TrainedModel,
    opts: &InferOptions,
    counter: &mut OpCounter,
) -> Result<Encoding> {
    if opts.lanes == 0 {
        return Err(Error::InvalidArgument("lanes must be positive".into()));
    }
    if g.feature_dim() != model.feature_dim {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} features, model expects {}",
            g.feature_dim(),
            model.feature_dim
        )));
    }
    let codes = hop_codes(g, model, opts, counter)?;
    let s = model.num_landmarks();
    let mut kernel_vec = vec![0.0f64; s];
    for (t, c) in codes.iter().enumerate() {
        let hist = lane_histogram(model, t, c, opts, counter);
        let x: Vec<f64> = hist.iter().map(|&v| v as f64).collect();
        let hm = &model.landmark_hists[t];
        let owned;
        let sched = match (opts.load_balance, model.cached_schedule(t, opts.lanes)) {
            (true, Some(s)) => s,
            _ => {
                owned = schedule_for(hm, opts)?;
                &owned
            }
        };
        let v = run_spmv(hm, &x, sched)?;
        counter.similarity_macs += hm.nnz() as u64;
        for (k, vi) in kernel_vec.iter_mut().zip(v) {
            *k += vi;
        }
    }

    // streaming projection: each output is reduced and signed immediately
    let d = model.dim();
    let mut hv = Hypervector::positive(d);
    for i in 0..d {
        let mut acc = 0.0f64;
        for (&w, &k) in model.projection.row(i).iter().zip(&kernel_vec) {
            acc += w as f64 * k;
        }
        if !acc.is_finite() {
            return Err(Error::NonFinite("projection"));
        }
        if acc < 0.0 {
            hv.set_negative(i);
        }
    }
    counter.projection_macs += (d * s) as u64;
    Ok(Encoding { hv, kernel_vec })
}

pub fn encode(g: &GraphCsr, model: &TrainedModel, opts: &InferOptions) -> Result<Encoding> {
    encode_counted(g, model, opts, &mut OpCounter::default())
}

/// Integer dot against every prototype; ties go to the lowest class.
pub fn classify(hv: &Hypervector, model: &TrainedModel) -> (usize, Vec<i64>) {
    classify_counted(hv, model, &mut OpCounter::default())
}

pub(crate) fn classify_counted(hv: &Hypervector, model: &TrainedModel, counter: &mut OpCounter) -> (usize, Vec<i64>) {
    let scores: Vec<i64> = model.prototypes.iter().map(|g| g.dot(hv)).collect();
    counter.matching_macs += (model.num_classes() * model.dim()) as u64;
    counter.argmax_cmps += model.num_classes() as u64;
    let mut best = 0;
    for (c, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = c;
        }
    }
    (best, scores)
}

/// Full inference of one graph: `(class, scores)` plus the op tally.
pub fn predict(
    g: &GraphCsr,
    model: &TrainedModel,
    opts: &InferOptions,
    counter: &mut OpCounter,
) -> Result<(usize, Vec<i64>)> {
    let e = encode_counted(g, model, opts, counter)?;
    Ok(classify_counted(&e.hv, model, counter))
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub graphs: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Accuracy of always answering the most frequent test label.
    pub majority_baseline: f64,
    pub latency_mean_ms: f64,
    pub latency_median_ms: f64,
    pub latency_p95_ms: f64,
    pub throughput_graphs_per_s: f64,
    pub predictions: Vec<usize>,
}

/// One graph at a time, timing encode + classify with the model resident.
pub fn evaluate(test: &Dataset, model: &TrainedModel, opts: &InferOptions) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    if test.feature_dim != model.feature_dim {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} features, model expects {}",
            test.feature_dim, model.feature_dim
        )));
    }
    let mut latencies = Vec::with_capacity(test.len());
    let mut predictions = Vec::with_capacity(test.len());
    let mut correct = 0;
    let wall = Instant::now();
    for g in &test.graphs {
        let t0 = Instant::now();
        let (c, _) = predict(g, model, opts, &mut OpCounter::default())?;
        latencies.push(t0.elapsed().as_secs_f64() * 1e3);
        correct += usize::from(c == g.label());
        predictions.push(c);
    }
    let total_s = wall.elapsed().as_secs_f64();
    let n = test.len();
    let mut counts = vec![0usize; test.num_classes.max(model.num_classes())];
    for g in &test.graphs {
        if g.label() < counts.len() {
            counts[g.label()] += 1;
        }
    }
    let majority = *counts.iter().max().unwrap_or(&0);
    let mut sorted = latencies.clone();
    sorted.sort_by(f64::total_cmp);
    let pct = |q: f64| sorted[((q * (n - 1) as f64).round() as usize).min(n - 1)];
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(EvalReport {
        graphs: n,
        correct,
        accuracy: correct as f64 / n as f64,
        majority_baseline: majority as f64 / n as f64,
        latency_mean_ms: latencies.iter().sum::<f64>() / n as f64,
        latency_median_ms: median,
        latency_p95_ms: pct(0.95),
        throughput_graphs_per_s: if total_s > 0.0 { n as f64 / total_s } else { f64::INFINITY },
        predictions,
    })
}
