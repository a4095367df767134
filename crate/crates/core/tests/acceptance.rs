//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Oracles here are written independently of the library
//! code paths they check.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;
use std::time::Instant;

use nystrom_hdc::dataset::{load_tudataset, split, Dataset, GraphCsr};
use nystrom_hdc::landmarks::{hybrid_select, kdpp_sample, log_det_psd};
use nystrom_hdc::linalg::{dot, sym_eigen, DenseMatrix, SplitMix64};
use nystrom_hdc::model::{self, encode, evaluate, load_model, predict, save_model, train, InferOptions, ModelConfig, TrainedModel};
use nystrom_hdc::mph::MphTable;
use nystrom_hdc::perfmodel::{lshu_baseline_macs, lshu_restructured_macs, memory_footprint, op_count, roofline, MachineParams, OpCounter};
use nystrom_hdc::propkernel::{
    all_hop_codes, build_codebooks, gram_matrix, graph_histograms, prefloor_baseline, prefloor_restructured,
    propagation_kernel, CodePath, LshParams,
};
use nystrom_hdc::schedule::{balance_report, build_schedule, spmv_reference, spmv_scheduled, spmv_scheduled_parallel};
use nystrom_hdc::synth;

// Tolerances.
const MPH_RUNTIME_S: f64 = 10.0;
const MPH_BITS_PER_KEY: f64 = 5.0;
const MPH_MEAN_PROBES: f64 = 2.2;
const LSHU_REL_TOL: f64 = 1e-9;
const BIN_EDGE_GUARD: f64 = 1e-6;
const NYSTROM_REL_TOL: f64 = 1e-8;
const EIGEN_TOL: f64 = 1e-10;
const DPP_SIGMAS: f64 = 3.0;
const DPP_DRAWS: usize = 10_000;
const DIVERSITY_TRIALS: usize = 20;
const DIVERSITY_UNIFORM_SUBSETS: usize = 100;
const DIVERSITY_MIN_WIN_RATE: f64 = 0.9;
const LOGDET_FLOOR: f64 = 1e-12;
const E2E_SECONDS: f64 = 60.0;
/// Accuracy slack between the DPP and uniform models: about one binomial
/// standard error of a proportion near 0.85 on 38 test graphs.
const ACC_TOL: f64 = 0.06;
/// Parameter bytes must track `s` up to the non-projection share (< 10%).
const BYTES_RATIO_TOL: f64 = 0.10;
const TABLE_MB_UNIFORM: f64 = 7.49;
const TABLE_MB_DPP: f64 = 4.62;
const AI_EXPECTED: f64 = 0.5;
const BALANCE_EXPECTED: f64 = 1.11;
const BALANCE_TOL: f64 = 0.005;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_keys(rng: &mut SplitMix64, n: usize) -> Vec<i64> {
    let mut seen = HashSet::new();
    let mut v = Vec::with_capacity(n);
    while v.len() < n {
        let k = rng.next_u64() as i64;
        if seen.insert(k) {
            v.push(k);
        }
    }
    v
}

fn mph_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SplitMix64::new(101);
    let mut notes = Vec::new();
    for n in [10usize, 1_000, 100_000] {
        let keys = random_keys(&mut rng, n);
        let vals: Vec<usize> = (0..n).map(|i| (i * 7919) % n).collect();
        let oracle: HashMap<i64, usize> = keys.iter().copied().zip(vals.iter().copied()).collect();
        let t = match MphTable::build(&keys, &vals, 2.0, rng.next_u64()) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("build n={n}: {e}")),
        };
        let mut seen = vec![false; n];
        for &k in &keys {
            match t.index_of(k) {
                Some(i) if i < n && !seen[i] => seen[i] = true,
                other => return outcome(false, format!("n={n}: key {k} -> {other:?} breaks bijection")),
            }
            if t.lookup(k) != oracle.get(&k).copied() {
                return outcome(false, format!("n={n}: value mismatch for {k}"));
            }
        }
        let mut false_accepts = 0;
        let mut probes = 0;
        while probes < 100_000 {
            let q = rng.next_u64() as i64;
            if oracle.contains_key(&q) {
                continue;
            }
            probes += 1;
            if t.lookup(q).is_some() {
                false_accepts += 1;
            }
        }
        if false_accepts > 0 {
            return outcome(false, format!("n={n}: {false_accepts} false accepts"));
        }
        notes.push(format!("n={n} ok"));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        secs < MPH_RUNTIME_S,
        format!("{}; 1e5 absent probes per size, 0 false accepts; {secs:.2}s (< {MPH_RUNTIME_S}s)", notes.join(", ")),
    )
}

fn mph_space() -> Outcome {
    let mut rng = SplitMix64::new(202);
    let keys = random_keys(&mut rng, 100_000);
    let vals: Vec<usize> = (0..keys.len()).collect();
    let t1 = MphTable::build(&keys, &vals, 1.0, 3).expect("build");
    let st = t1.stats();
    let t2 = MphTable::build(&keys, &vals, 2.0, 3).expect("build");
    let total: u64 = keys.iter().map(|&k| t2.lookup_with_probes(k).1 as u64).sum();
    let mean_probes = total as f64 / keys.len() as f64;
    outcome(
        st.level_bits_per_key <= MPH_BITS_PER_KEY && mean_probes <= MPH_MEAN_PROBES,
        format!(
            "gamma=1: {:.3} level bits/key (<= {MPH_BITS_PER_KEY}), {:.3} incl. rank; gamma=2: mean probes {mean_probes:.3} (<= {MPH_MEAN_PROBES})",
            st.level_bits_per_key, st.total_bits_per_key
        ),
    )
}

/// Dense-matrix route: `M ← A M` with an explicit `N × N` adjacency.
fn oracle_codes(g: &GraphCsr, p: &LshParams) -> Vec<Vec<i64>> {
    let a = g.to_dense_adjacency();
    let mut m = g.features().clone();
    let mut out = Vec::new();
    for t in 0..p.hops() {
        if t > 0 {
            m = a.matmul(&m).unwrap();
        }
        out.push(
            (0..m.rows())
                .map(|i| ((dot(m.row(i), p.projection(t)) + p.offset(t)) / p.width()).floor() as i64)
                .collect(),
        );
    }
    out
}

fn oracle_kernel(gx: &GraphCsr, gz: &GraphCsr, landmarks: &[&GraphCsr], p: &LshParams) -> u64 {
    let mut vocab: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); p.hops()];
    for l in landmarks {
        for (t, codes) in oracle_codes(l, p).into_iter().enumerate() {
            vocab[t].extend(codes);
        }
    }
    let hist = |g: &GraphCsr| -> Vec<HashMap<i64, u64>> {
        oracle_codes(g, p)
            .into_iter()
            .enumerate()
            .map(|(t, codes)| {
                let mut h = HashMap::new();
                for c in codes.into_iter().filter(|c| vocab[t].contains(c)) {
                    *h.entry(c).or_insert(0) += 1;
                }
                h
            })
            .collect()
    };
    let (hx, hz) = (hist(gx), hist(gz));
    hx.iter()
        .zip(&hz)
        .map(|(a, b)| a.iter().map(|(c, &x)| x * b.get(c).copied().unwrap_or(0)).sum::<u64>())
        .sum()
}

fn kernel_oracle() -> Outcome {
    let mut rng = SplitMix64::new(303);
    let mut nonzero = 0;
    for trial in 0..50 {
        let f = 1 + rng.below(8) as usize;
        let h = 1 + rng.below(4) as usize;
        let mut g = || {
            let n = 1 + rng.below(64) as usize;
            let p = rng.uniform(0.02, 0.3);
            synth::random_graph(&mut rng, n, p, f, 0)
        };
        let (gx, gz, l2) = (g(), g(), g());
        let p = LshParams::sample(&mut rng, f, h, 1.0).unwrap();
        let landmarks = [&gx, &l2];
        let cb = build_codebooks(&landmarks, &p).unwrap();
        let got = propagation_kernel(&gx, &gz, &p, &cb).unwrap();
        let want = oracle_kernel(&gx, &gz, &landmarks, &p);
        if got != want {
            return outcome(false, format!("trial {trial}: pipeline {got} != oracle {want}"));
        }
        nonzero += usize::from(got > 0);
    }
    outcome(true, format!("50/50 graph pairs equal to brute-force histograms ({nonzero} nonzero)"))
}

fn lshu_restructuring() -> Outcome {
    let mut rng = SplitMix64::new(404);
    let (mut worst, mut compared, mut guarded) = (0.0f64, 0usize, 0usize);
    for i in 0..100 {
        let n = 2 + rng.below(63) as usize;
        let f = 1 + rng.below(8) as usize;
        let h = 1 + rng.below(5) as usize;
        let ep = rng.uniform(0.05, 0.4);
        let g = synth::random_graph_dense_features(&mut rng, n, ep, f);
        let p = LshParams::sample(&mut rng, f, h, 1.0).unwrap();
        for t in 0..h {
            let a = prefloor_baseline(&g, &p, t).unwrap();
            let b = prefloor_restructured(&g, &p, t).unwrap();
            for (x, y) in a.iter().zip(&b) {
                let rel = (x - y).abs() / x.abs().max(y.abs()).max(1.0);
                worst = worst.max(rel);
                let near_edge = (x - x.round()).abs() < BIN_EDGE_GUARD || (y - y.round()).abs() < BIN_EDGE_GUARD;
                if near_edge {
                    guarded += 1;
                } else {
                    compared += 1;
                    if x.floor() != y.floor() {
                        return outcome(false, format!("graph {i} hop {t}: codes differ away from a bin edge"));
                    }
                }
            }
        }
        let nnz = g.nnz() as u64;
        let (nn, ff, hh) = (n as u64, f as u64, h as u64);
        let mut cb = OpCounter::default();
        all_hop_codes(&g, &p, CodePath::Baseline, &mut cb).unwrap();
        let mut cr = OpCounter::default();
        all_hop_codes(&g, &p, CodePath::Restructured, &mut cr).unwrap();
        let base = cb.lsh_macs + cb.propagation_macs;
        let restr = cr.lsh_macs + cr.propagation_macs;
        if base != hh * nn * ff + (hh - 1) * ff * nnz || restr != hh * nn * ff + hh * (hh - 1) / 2 * nnz {
            return outcome(false, format!("graph {i}: op counts {base}/{restr} differ from formulas"));
        }
        if base != lshu_baseline_macs(nn, ff, hh, nnz) || restr != lshu_restructured_macs(nn, ff, hh, nnz) {
            return outcome(false, "perf-model formulas disagree with counters");
        }
    }
    outcome(
        worst <= LSHU_REL_TOL,
        format!(
            "max rel pre-floor diff {worst:.2e} (<= {LSHU_REL_TOL:e}); {compared} codes equal, {guarded} within {BIN_EDGE_GUARD:e} of an edge skipped; op counts exact on 100 graphs"
        ),
    )
}

fn nystrom_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for (i, n) in [5usize, 12, 20].into_iter().enumerate() {
        let ds = synth::labeled_dataset(&mut SplitMix64::new(500 + i as u64), n, 2, 4, (4, 12));
        let cfg = ModelConfig {
            dim: 256,
            landmarks: n,
            hops: 3,
            dpp: false,
            ..ModelConfig::default()
        };
        let m = train(&ds, &cfg, &mut SplitMix64::new(7)).unwrap();
        let approx = model::nystrom_gram(&m, &ds.graphs).unwrap();
        let hists: Vec<_> = ds
            .graphs
            .iter()
            .map(|g| graph_histograms(g, m.lsh(), m.codebook()).unwrap())
            .collect();
        let exact = gram_matrix(&hists);
        let err = approx.sub(&exact).frobenius_norm() / exact.frobenius_norm();
        worst = worst.max(err);
    }
    outcome(
        worst <= NYSTROM_REL_TOL,
        format!("n in {{5,12,20}}, s = n: max ||G^-G||_F/||G||_F = {worst:.2e} (<= {NYSTROM_REL_TOL:e})"),
    )
}

fn eigensolver() -> Outcome {
    let mut rng = SplitMix64::new(606);
    let (mut rec, mut orth) = (0.0f64, 0.0f64);
    for n in [1usize, 2, 3, 8, 16, 33, 64] {
        for _ in 0..3 {
            let b = DenseMatrix::from_fn(n, n, |_, _| rng.next_gaussian());
            let m = DenseMatrix::from_fn(n, n, |i, j| b[(i, j)] + b[(j, i)]);
            let e = sym_eigen(&m).unwrap();
            // reconstruction from explicit columns, independent of the library helper
            let mut r = DenseMatrix::zeros(n, n);
            for k in 0..n {
                let q = e.column(k);
                for i in 0..n {
                    for j in 0..n {
                        r[(i, j)] += e.values[k] * q[i] * q[j];
                    }
                }
            }
            rec = rec.max(r.sub(&m).frobenius_norm() / m.frobenius_norm().max(1e-300));
            for a in 0..n {
                for c in 0..n {
                    let d = dot(&e.column(a), &e.column(c)) - if a == c { 1.0 } else { 0.0 };
                    orth = orth.max(d.abs());
                }
            }
        }
    }
    outcome(
        rec <= EIGEN_TOL && orth <= EIGEN_TOL,
        format!("n <= 64: reconstruction {rec:.2e}, orthonormality {orth:.2e} (<= {EIGEN_TOL:e})"),
    )
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if m < k {
        return vec![];
    }
    let mut out = subsets(m - 1, k);
    for mut s in subsets(m - 1, k - 1) {
        s.push(m - 1);
        out.push(s);
    }
    out
}

fn kdpp_distribution() -> Outcome {
    let mut rng = SplitMix64::new(707);
    let cases: [(&[f64], usize); 3] = [
        (&[3.0, 2.0, 1.0, 0.5, 0.0], 2),
        (&[1.0, 4.0, 0.0, 2.0, 0.25, 1.5], 3),
        (&[2.0, 1.0, 1.0, 0.5, 3.0, 0.1, 0.7, 1.2, 0.0, 0.9], 2),
    ];
    let (mut worst_z, mut cells) = (0.0f64, 0);
    for (lam, k) in cases {
        let kernel = DenseMatrix::from_diag(lam);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..DPP_DRAWS {
            let mut s = kdpp_sample(&kernel, k, &mut rng).unwrap();
            s.sort_unstable();
            if s.iter().any(|&i| lam[i] == 0.0) {
                return outcome(false, format!("zero-eigenvalue item selected: {s:?}"));
            }
            *counts.entry(s).or_default() += 1;
        }
        let all = subsets(lam.len(), k);
        let z: f64 = all.iter().map(|s| s.iter().map(|&i| lam[i]).product::<f64>()).sum();
        for s in &all {
            let p = s.iter().map(|&i| lam[i]).product::<f64>() / z;
            let c = counts.get(s).copied().unwrap_or(0) as f64;
            let sd = (DPP_DRAWS as f64 * p * (1.0 - p)).sqrt();
            let dev = (c - DPP_DRAWS as f64 * p).abs();
            if p > 0.0 {
                worst_z = worst_z.max(dev / sd);
                cells += 1;
            }
            if dev > DPP_SIGMAS * sd {
                return outcome(false, format!("subset {s:?}: {c} vs expected {:.1}", DPP_DRAWS as f64 * p));
            }
        }
    }
    outcome(
        true,
        format!("3 diagonal kernels (m <= 10), {DPP_DRAWS} draws each: {cells} subsets, worst |z| = {worst_z:.2} (<= {DPP_SIGMAS}); zero items never drawn"),
    )
}

fn dpp_diversity() -> Outcome {
    let mut wins = 0;
    let s = 6;
    for trial in 0..DIVERSITY_TRIALS {
        let mut rng = SplitMix64::new(800 + trial as u64);
        let ds = synth::clustered_dataset(&mut rng, 10, 6, 10, 4);
        let p = LshParams::sample(&mut rng, 4, 3, 1.0).unwrap();
        let all: Vec<&GraphCsr> = ds.graphs.iter().collect();
        let cb = build_codebooks(&all, &p).unwrap();
        let hists: Vec<_> = all.iter().map(|g| graph_histograms(g, &p, &cb).unwrap()).collect();
        let k_ref = gram_matrix(&hists);
        let sel = hybrid_select(&ds, s, 4.0, &p, &mut rng).unwrap();
        let ld_sel = log_det_psd(&k_ref.select(&sel.indices), LOGDET_FLOOR).unwrap();
        let mut mean = 0.0;
        for _ in 0..DIVERSITY_UNIFORM_SUBSETS {
            let idx = nystrom_hdc::landmarks::uniform_pool(ds.len(), s, &mut rng).unwrap();
            mean += log_det_psd(&k_ref.select(&idx), LOGDET_FLOOR).unwrap();
        }
        mean /= DIVERSITY_UNIFORM_SUBSETS as f64;
        wins += usize::from(ld_sel >= mean);
    }
    let rate = wins as f64 / DIVERSITY_TRIALS as f64;
    outcome(
        rate >= DIVERSITY_MIN_WIN_RATE,
        format!("hybrid log-det >= mean of {DIVERSITY_UNIFORM_SUBSETS} uniform subsets in {wins}/{DIVERSITY_TRIALS} trials (need >= {:.0}%)", DIVERSITY_MIN_WIN_RATE * 100.0),
    )
}

fn schedule_correctness() -> Outcome {
    let mut rng = SplitMix64::new(909);
    let mut notes = Vec::new();
    for (rows, alpha) in [(4096usize, 1.0f64), (4096, 0.7), (1000, 1.3)] {
        let m = synth::power_law_matrix(&mut rng, rows, rows, alpha, rows / 8);
        let x: Vec<f64> = (0..rows).map(|_| rng.next_gaussian()).collect();
        let reference = spmv_reference(&m, &x).unwrap();
        for lanes in [1usize, 2, 4, 8] {
            let sched = build_schedule(&m, lanes).unwrap();
            if !sched.is_permutation() {
                return outcome(false, "schedule is not a permutation");
            }
            for out in [spmv_scheduled(&m, &x, &sched).unwrap(), spmv_scheduled_parallel(&m, &x, &sched).unwrap()] {
                if out.iter().zip(&reference).any(|(a, b)| a.to_bits() != b.to_bits()) {
                    return outcome(false, format!("P={lanes}: output bits differ"));
                }
            }
            let r = balance_report(&m, &sched).unwrap();
            if r.scheduled_imbalance > r.contiguous_imbalance {
                return outcome(
                    false,
                    format!("P={lanes}: scheduled {} > contiguous {}", r.scheduled_imbalance, r.contiguous_imbalance),
                );
            }
            if lanes == 4 && rows == 4096 && alpha == 1.0 {
                notes.push(format!(
                    "N=4096 P=4 imbalance {:.3} vs contiguous {:.3}",
                    r.scheduled_imbalance, r.contiguous_imbalance
                ));
            }
        }
    }
    outcome(true, format!("bit-identical for P in {{1,2,4,8}} on 3 power-law matrices; {}", notes.join("")))
}

fn lane_determinism() -> Outcome {
    let ds = synth::labeled_dataset(&mut SplitMix64::new(1001), 24, 2, 5, (6, 20));
    let cfg = ModelConfig {
        dim: 1024,
        landmarks: 12,
        hops: 4,
        ..ModelConfig::default()
    };
    let m = train(&ds, &cfg, &mut SplitMix64::new(3)).unwrap();
    let mut rng = SplitMix64::new(1002);
    for i in 0..20 {
        // a few graphs are large enough to run the lanes on the thread pool
        let n = if i % 5 == 0 { 2500 + rng.below(500) as usize } else { 3 + rng.below(60) as usize };
        let p = if n > 1000 { 3.0 / n as f64 } else { 0.2 };
        let g = synth::random_graph(&mut rng, n, p, 5, 0);
        let base = encode(&g, &m, &InferOptions { lanes: 1, ..Default::default() }).unwrap();
        for lanes in [2usize, 4, 8] {
            for load_balance in [true, false] {
                let e = encode(&g, &m, &InferOptions { lanes, load_balance, ..Default::default() }).unwrap();
                let same_bits = e.hv == base.hv
                    && e.kernel_vec.iter().zip(&base.kernel_vec).all(|(a, b)| a.to_bits() == b.to_bits());
                if !same_bits {
                    return outcome(false, format!("graph {i} (N={n}) differs at {lanes} lanes"));
                }
            }
        }
    }
    outcome(true, "20 graphs (N up to ~3000) bit-identical for lanes in {1,2,4,8}, with and without load balancing")
}

struct MutagRun {
    default_model: TrainedModel,
    test: Dataset,
}

fn mutag_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/MUTAG")
}

fn end_to_end(run: &mut Option<MutagRun>) -> Outcome {
    let t0 = Instant::now();
    let ds = match load_tudataset(mutag_dir(), "MUTAG") {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("cannot load MUTAG: {e}")),
    };
    let (tr, te) = split(&ds, 0.2, 7).unwrap();
    let m = match train(&tr, &ModelConfig::default(), &mut SplitMix64::new(7)) {
        Ok(m) => m,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let rep = evaluate(&te, &m, &InferOptions::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let base_ok = rep.accuracy > rep.majority_baseline && secs < E2E_SECONDS;

    // landmark budget scaled by the published memory ratio
    let s_uniform = 64usize;
    let s_dpp = (s_uniform as f64 * TABLE_MB_DPP / TABLE_MB_UNIFORM).round() as usize;
    let uni = train(
        &tr,
        &ModelConfig {
            landmarks: s_uniform,
            dpp: false,
            ..ModelConfig::default()
        },
        &mut SplitMix64::new(7),
    )
    .unwrap();
    let dpp = train(
        &tr,
        &ModelConfig {
            landmarks: s_dpp,
            dpp: true,
            ..ModelConfig::default()
        },
        &mut SplitMix64::new(7),
    )
    .unwrap();
    let acc_u = evaluate(&te, &uni, &InferOptions::default()).unwrap().accuracy;
    let acc_d = evaluate(&te, &dpp, &InferOptions::default()).unwrap().accuracy;
    let bytes_u = uni.summary().parameter_accounting.parameters;
    let bytes_d = dpp.summary().parameter_accounting.parameters;
    let s_ratio = s_dpp as f64 / s_uniform as f64;
    let b_ratio = bytes_d / bytes_u;
    let prop_ok = (b_ratio / s_ratio - 1.0).abs() <= BYTES_RATIO_TOL;
    let acc_ok = acc_d >= acc_u - ACC_TOL;

    *run = Some(MutagRun { default_model: m, test: te });
    outcome(
        base_ok && acc_ok && prop_ok && s_dpp <= s_uniform,
        format!(
            "{} train / {} test; default (dpp, s=64) acc {:.3} vs majority {:.3}; train+eval {secs:.1}s (< {E2E_SECONDS}s); \
             uniform s={s_uniform} acc {acc_u:.3}, dpp s={s_dpp} acc {acc_d:.3} (tol {ACC_TOL}); \
             param bytes ratio {b_ratio:.3} vs s ratio {s_ratio:.3} (tol {:.0}%)",
            tr.len(),
            rep.graphs,
            rep.accuracy,
            rep.majority_baseline,
            BYTES_RATIO_TOL * 100.0
        ),
    )
}

fn perf_model(run: &Option<MutagRun>) -> Outcome {
    let r = roofline(&MachineParams::default());
    let roof_ok = r.arithmetic_intensity == AI_EXPECTED
        && (r.machine_balance - BALANCE_EXPECTED).abs() <= BALANCE_TOL
        && r.memory_bound;

    let (m, graphs): (TrainedModel, Vec<GraphCsr>) = match run {
        Some(run) => (run.default_model.clone(), run.test.graphs.clone()),
        None => {
            let ds = synth::labeled_dataset(&mut SplitMix64::new(1201), 20, 2, 4, (5, 15));
            let cfg = ModelConfig { dim: 512, landmarks: 8, ..ModelConfig::default() };
            (train(&ds, &cfg, &mut SplitMix64::new(1)).unwrap(), ds.graphs)
        }
    };
    let opts = InferOptions { code_path: CodePath::Baseline, ..Default::default() };
    for (i, g) in graphs.iter().enumerate() {
        let mut c = OpCounter::default();
        predict(g, &m, &opts, &mut c).unwrap();
        let rows = op_count(&m.workload(g)).rows;
        if c.as_ops() != rows {
            return outcome(false, format!("graph {i}: counted {:?} vs model {:?}", c.as_ops(), rows));
        }
    }
    let share = memory_footprint(&m.workload(&graphs[0])).projection_share_of_parameters;
    outcome(
        roof_ok,
        format!(
            "AI {:.2} ops/B, balance {:.3} ops/B, memory-bound = {}; counted ops == analytic rows on {} graphs; projection share of parameters {:.1}%",
            r.arithmetic_intensity,
            r.machine_balance,
            r.memory_bound,
            graphs.len(),
            share * 100.0
        ),
    )
}

fn serialization(run: &Option<MutagRun>) -> Outcome {
    let mut rng = SplitMix64::new(1301);
    let keys = random_keys(&mut rng, 5000);
    let vals: Vec<usize> = (0..keys.len()).collect();
    let t = MphTable::build(&keys, &vals, 2.0, 77).unwrap();
    let b = t.to_bytes();
    let t2 = MphTable::from_bytes(&b).unwrap();
    let mph_ok = t2.to_bytes() == b
        && keys.iter().all(|&k| t2.lookup(k) == t.lookup(k))
        && (0..1000).all(|_| {
            let q = rng.next_u64() as i64;
            t2.lookup(q) == t.lookup(q)
        });

    let (m, graphs) = match run {
        Some(run) => (run.default_model.clone(), run.test.graphs.clone()),
        None => {
            let ds = synth::labeled_dataset(&mut SplitMix64::new(1302), 20, 2, 4, (5, 15));
            let cfg = ModelConfig { dim: 512, landmarks: 8, ..ModelConfig::default() };
            (train(&ds, &cfg, &mut SplitMix64::new(1)).unwrap(), ds.graphs)
        }
    };
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.model"), dir.path().join("b.model"));
    save_model(&m, &p1).unwrap();
    let loaded = load_model(&p1).unwrap();
    save_model(&loaded, &p2).unwrap();
    let bytes_ok = std::fs::read(&p1).unwrap() == std::fs::read(&p2).unwrap();
    let opts = InferOptions::default();
    let infer_ok = graphs.iter().all(|g| {
        let a = predict(g, &m, &opts, &mut OpCounter::default()).unwrap();
        let b = predict(g, &loaded, &opts, &mut OpCounter::default()).unwrap();
        a == b && encode(g, &m, &opts).unwrap() == encode(g, &loaded, &opts).unwrap()
    });
    let size = std::fs::metadata(&p1).unwrap().len();
    outcome(
        mph_ok && bytes_ok && infer_ok,
        format!(
            "MPH round trip identical = {mph_ok}; model save/load/save identical = {bytes_ok} ({size} bytes); post-load inference identical on {} graphs = {infer_ok}",
            graphs.len()
        ),
    )
}

type Criterion = Box<dyn FnOnce(&mut Option<MutagRun>) -> Outcome>;

fn main() {
    let mut run = None;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("MPH correctness", Box::new(|_| mph_correctness())),
        ("MPH space", Box::new(|_| mph_space())),
        ("kernel oracle equivalence", Box::new(|_| kernel_oracle())),
        ("LSHU restructuring", Box::new(|_| lshu_restructuring())),
        ("Nystrom exactness", Box::new(|_| nystrom_exactness())),
        ("eigensolver", Box::new(|_| eigensolver())),
        ("k-DPP distribution", Box::new(|_| kdpp_distribution())),
        ("DPP diversity", Box::new(|_| dpp_diversity())),
        ("schedule correctness", Box::new(|_| schedule_correctness())),
        ("lane determinism", Box::new(|_| lane_determinism())),
        ("end-to-end MUTAG", Box::new(end_to_end)),
        ("perf model", Box::new(|r| perf_model(r))),
        ("serialization", Box::new(|r| serialization(r))),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let t0 = Instant::now();
        let o = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(&mut run)))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        failed += usize::from(!o.pass);
        println!(
            "acceptance {:>2} {:<27} {} [{:.1}s] {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance summary: {} passed, {failed} failed", 13 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
