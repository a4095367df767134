//! Latency comparison across inference toggles. Load-balancing variants run
//! on synthetic hub-heavy graphs, everything else on the test split.

use std::time::Instant;

use anyhow::Result;
use clap::ValueEnum;
use nystrom_hdc::perfmodel::{lshu_baseline_macs, lshu_restructured_macs};
use nystrom_hdc::schedule::{balance_report, build_schedule};
use nystrom_hdc::{
    predict, synth, CodePath, GraphCsr, InferOptions, LookupEngine, OpCounter, SplitMix64, TrainedModel,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{envelope, train_model};
use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    LbOn,
    LbOff,
    Restructured,
    Baseline,
    Mph,
    Hashmap,
    BinarySearch,
    Dpp,
    Uniform,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::LbOn,
        Variant::LbOff,
        Variant::Restructured,
        Variant::Baseline,
        Variant::Mph,
        Variant::Hashmap,
        Variant::BinarySearch,
        Variant::Dpp,
        Variant::Uniform,
    ];

    fn on_skewed(self) -> bool {
        matches!(self, Variant::LbOn | Variant::LbOff)
    }

    fn options(self, lanes: usize) -> InferOptions {
        let base = InferOptions {
            lanes,
            ..InferOptions::default()
        };
        match self {
            Variant::LbOff => InferOptions {
                load_balance: false,
                ..base
            },
            Variant::Baseline => InferOptions {
                code_path: CodePath::Baseline,
                ..base
            },
            Variant::Hashmap => InferOptions {
                lookup: LookupEngine::HashMap,
                ..base
            },
            Variant::BinarySearch => InferOptions {
                lookup: LookupEngine::BinarySearch,
                ..base
            },
            _ => base,
        }
    }
}

pub struct BenchArgs {
    pub variants: Vec<Variant>,
    pub repeats: usize,
    pub skewed_graphs: usize,
    pub skewed_nodes: usize,
    pub dpp_landmarks: Option<usize>,
}

#[derive(Serialize)]
struct Entry {
    variant: Variant,
    workload: &'static str,
    graphs: usize,
    landmarks: usize,
    repeats: usize,
    latency_mean_ms: f64,
    latency_median_ms: f64,
    /// Ops of one pass over the workload.
    ops: OpCounter,
    accuracy: Option<f64>,
    parameter_bytes: usize,
}

fn run(v: Variant, m: &TrainedModel, graphs: &[GraphCsr], lanes: usize, repeats: usize, labeled: bool) -> Result<Entry> {
    let opts = v.options(lanes);
    let mut lat = Vec::with_capacity(graphs.len() * repeats);
    let mut ops = OpCounter::default();
    let mut correct = 0;
    for rep in 0..repeats {
        for g in graphs {
            let mut c = OpCounter::default();
            let t0 = Instant::now();
            let (class, _) = predict(g, m, &opts, &mut c)?;
            lat.push(t0.elapsed().as_secs_f64() * 1e3);
            if rep == 0 {
                ops.merge(&c);
                correct += usize::from(class == g.label());
            }
        }
    }
    let mut sorted = lat.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(Entry {
        variant: v,
        workload: if v.on_skewed() { "skewed_synthetic" } else { "test_split" },
        graphs: graphs.len(),
        landmarks: m.num_landmarks(),
        repeats,
        latency_mean_ms: lat.iter().sum::<f64>() / lat.len().max(1) as f64,
        latency_median_ms: sorted.get(sorted.len() / 2).copied().unwrap_or(0.0),
        ops,
        accuracy: labeled.then(|| correct as f64 / graphs.len().max(1) as f64),
        parameter_bytes: m.artifact_bytes().total,
    })
}

pub fn cmd_bench(cfg: &RunConfig, args: &BenchArgs) -> Result<Value> {
    let (train_set, test_set) = cfg.load_split()?;
    let repeats = args.repeats.max(1);
    let lanes = cfg.model.lanes;
    let needs = |f: fn(&Variant) -> bool| args.variants.iter().any(f);

    let primary = if needs(|v| !matches!(v, Variant::Dpp | Variant::Uniform)) {
        Some(train_model(cfg, &train_set)?)
    } else {
        None
    };
    let with_dpp = |dpp: bool, s: usize| {
        let mut c = cfg.clone();
        c.model.dpp = dpp;
        c.model.landmarks = s;
        train_model(&c, &train_set)
    };
    let dpp_model = if needs(|v| *v == Variant::Dpp) {
        Some(with_dpp(true, args.dpp_landmarks.unwrap_or(cfg.model.landmarks))?)
    } else {
        None
    };
    let uniform_model = if needs(|v| *v == Variant::Uniform) {
        Some(with_dpp(false, cfg.model.landmarks)?)
    } else {
        None
    };

    let f = train_set.feature_dim;
    let mut rng = SplitMix64::new(cfg.seed ^ 0x5eed);
    let skewed: Vec<GraphCsr> = if needs(|v| v.on_skewed()) {
        (0..args.skewed_graphs.max(1))
            .map(|_| synth::skewed_graph(&mut rng, args.skewed_nodes.max(2), 8, 0.3, f))
            .collect()
    } else {
        Vec::new()
    };

    let mut entries = Vec::with_capacity(args.variants.len());
    for &v in &args.variants {
        let m = match v {
            Variant::Dpp => dpp_model.as_ref(),
            Variant::Uniform => uniform_model.as_ref(),
            _ => primary.as_ref(),
        }
        .expect("model trained for every requested variant");
        let (graphs, labeled) = if v.on_skewed() {
            (&skewed[..], false)
        } else {
            (&test_set.graphs[..], true)
        };
        log::info!("bench {v:?} on {} graphs", graphs.len());
        entries.push(run(v, m, graphs, lanes, repeats, labeled)?);
    }

    let find = |v: Variant| entries.iter().find(|e| e.variant == v);
    let ratio = |slow: &Entry, fast: &Entry| slow.latency_mean_ms / fast.latency_mean_ms.max(f64::MIN_POSITIVE);
    let mut derived = serde_json::Map::new();
    if let (Some(on), Some(off)) = (find(Variant::LbOn), find(Variant::LbOff)) {
        let (mut sched, mut contig) = (0usize, 0usize);
        for g in &skewed {
            let r = balance_report(g, &build_schedule(g, lanes)?)?;
            sched += r.scheduled_cost;
            contig += r.contiguous_cost;
        }
        derived.insert(
            "load_balancing".into(),
            json!({
                "lanes": lanes,
                "measured_speedup": ratio(off, on),
                "modeled_lockstep_cost_scheduled": sched,
                "modeled_lockstep_cost_contiguous": contig,
                "modeled_speedup": contig as f64 / sched.max(1) as f64,
            }),
        );
    }
    if let (Some(r), Some(b)) = (find(Variant::Restructured), find(Variant::Baseline)) {
        let h = cfg.model.hops as u64;
        let (mut fb, mut fr) = (0u64, 0u64);
        for g in &test_set.graphs {
            let (n, nnz) = (g.num_nodes() as u64, g.nnz() as u64);
            fb += lshu_baseline_macs(n, f as u64, h, nnz);
            fr += lshu_restructured_macs(n, f as u64, h, nnz);
        }
        let cb = b.ops.propagation_macs + b.ops.lsh_macs;
        let cr = r.ops.propagation_macs + r.ops.lsh_macs;
        derived.insert(
            "lshu_restructuring".into(),
            json!({
                "features": f,
                "hops": h,
                "measured_speedup": ratio(b, r),
                "counted_macs_baseline": cb,
                "counted_macs_restructured": cr,
                "formula_macs_baseline": fb,
                "formula_macs_restructured": fr,
                "counted_matches_formula": cb == fb && cr == fr,
                "predicted_cheaper": 2 * f as u64 > h,
                "mac_reduction": cb as f64 / cr.max(1) as f64,
            }),
        );
    }
    if let Some(mph) = find(Variant::Mph) {
        let mut o = serde_json::Map::new();
        for (key, v) in [("hashmap_over_mph", Variant::Hashmap), ("binary_search_over_mph", Variant::BinarySearch)] {
            if let Some(e) = find(v) {
                o.insert(key.into(), json!(ratio(e, mph)));
            }
        }
        if !o.is_empty() {
            derived.insert("lookup".into(), Value::Object(o));
        }
    }
    if let (Some(d), Some(u)) = (find(Variant::Dpp), find(Variant::Uniform)) {
        derived.insert(
            "landmark_selection".into(),
            json!({
                "dpp_landmarks": d.landmarks,
                "uniform_landmarks": u.landmarks,
                "speedup": ratio(u, d),
                "parameter_bytes_ratio": d.parameter_bytes as f64 / u.parameter_bytes.max(1) as f64,
                "dpp_accuracy": d.accuracy,
                "uniform_accuracy": u.accuracy,
            }),
        );
    }

    Ok(envelope(
        "bench",
        json!({ "repeats": repeats, "entries": entries, "derived": derived, "config": cfg }),
    ))
}
