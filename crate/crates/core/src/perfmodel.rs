//! Analytical cost model: per-stage op counts, memory footprint and a
//! roofline verdict for the projection stage, plus the counters that real
//! inference fills in so the model can be checked against execution.
//!
//! Op rows count two ops per multiply-accumulate. The lookup row is the
//! binary-search estimate `N·log2|B_t|`; with the MPH it is really `O(N)`, so
//! both numbers are reported.

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: u32 = 1;

/// MACs and probes tallied during one inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCounter {
    pub propagation_macs: u64,
    pub lsh_macs: u64,
    pub lookup_probes: u64,
    pub similarity_macs: u64,
    pub projection_macs: u64,
    pub matching_macs: u64,
    pub argmax_cmps: u64,
}

impl OpCounter {
    pub fn merge(&mut self, o: &OpCounter) {
        self.propagation_macs += o.propagation_macs;
        self.lsh_macs += o.lsh_macs;
        self.lookup_probes += o.lookup_probes;
        self.similarity_macs += o.similarity_macs;
        self.projection_macs += o.projection_macs;
        self.matching_macs += o.matching_macs;
        self.argmax_cmps += o.argmax_cmps;
    }

    /// Counted ops in the same units as [`OpCounts`] (lookup excluded).
    pub fn as_ops(&self) -> OpCounts {
        OpCounts {
            propagation: 2 * self.propagation_macs,
            lsh: 2 * self.lsh_macs,
            similarity: 2 * self.similarity_macs,
            projection: 2 * self.projection_macs,
            matching: 2 * self.matching_macs,
            argmax: self.argmax_cmps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BitWidths {
    pub adjacency: u64,
    pub features: u64,
    pub codebook: u64,
    pub histogram: u64,
    pub projection: u64,
    pub prototype: u64,
}

impl Default for BitWidths {
    fn default() -> Self {
        Self {
            adjacency: 1,
            features: 32,
            codebook: 96,
            histogram: 32,
            projection: 32,
            prototype: 1,
        }
    }
}

/// Shape of one inference: query graph plus model dimensions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorkloadParams {
    pub nodes: u64,
    pub features: u64,
    pub hops: u64,
    pub landmarks: u64,
    pub dim: u64,
    pub classes: u64,
    pub nnz_adjacency: u64,
    pub codebook_sizes: Vec<u64>,
    pub nnz_histograms: Vec<u64>,
    pub bits: BitWidths,
}

impl WorkloadParams {
    pub fn adjacency_density(&self) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            self.nnz_adjacency as f64 / (self.nodes * self.nodes) as f64
        }
    }

    pub fn histogram_densities(&self) -> Vec<f64> {
        self.codebook_sizes
            .iter()
            .zip(&self.nnz_histograms)
            .map(|(&b, &z)| {
                if b == 0 || self.landmarks == 0 {
                    0.0
                } else {
                    z as f64 / (self.landmarks * b) as f64
                }
            })
            .collect()
    }
}

/// Integer-valued stage rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub propagation: u64,
    pub lsh: u64,
    pub similarity: u64,
    pub projection: u64,
    pub matching: u64,
    pub argmax: u64,
}

impl OpCounts {
    pub fn sum(&self) -> u64 {
        self.propagation + self.lsh + self.similarity + self.projection + self.matching + self.argmax
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpReport {
    pub rows: OpCounts,
    /// `N Σ_t log2|B_t|`, binary-search lookup estimate.
    pub lookup_binary_search: f64,
    /// `N·H` single-probe hash lookups.
    pub lookup_hashed: u64,
    pub total: f64,
    pub lshu_baseline_macs: u64,
    pub lshu_restructured_macs: u64,
    pub restructured_cheaper: bool,
}

/// `H·N·f + (H−1)·f·nnz`: propagate features, project each hop.
pub fn lshu_baseline_macs(n: u64, f: u64, h: u64, nnz: u64) -> u64 {
    h * n * f + h.saturating_sub(1) * f * nnz
}

/// `H·N·f + H(H−1)/2·nnz`: project first, then `t` SpMVs for hop `t`.
pub fn lshu_restructured_macs(n: u64, f: u64, h: u64, nnz: u64) -> u64 {
    h * n * f + h * h.saturating_sub(1) / 2 * nnz
}

pub fn op_count(w: &WorkloadParams) -> OpReport {
    let rows = OpCounts {
        propagation: 2 * w.hops.saturating_sub(1) * w.nnz_adjacency * w.features,
        lsh: 2 * w.hops * w.nodes * w.features,
        similarity: 2 * w.nnz_histograms.iter().sum::<u64>(),
        projection: 2 * w.landmarks * w.dim,
        matching: 2 * w.classes * w.dim,
        argmax: w.classes,
    };
    let lookup = w.nodes as f64
        * w.codebook_sizes
            .iter()
            .map(|&b| if b > 1 { (b as f64).log2() } else { 0.0 })
            .sum::<f64>();
    let base = lshu_baseline_macs(w.nodes, w.features, w.hops, w.nnz_adjacency);
    let restr = lshu_restructured_macs(w.nodes, w.features, w.hops, w.nnz_adjacency);
    OpReport {
        rows,
        lookup_binary_search: lookup,
        lookup_hashed: w.nodes * w.hops,
        total: rows.sum() as f64 + lookup,
        lshu_baseline_macs: base,
        lshu_restructured_macs: restr,
        restructured_cheaper: restr < base,
    }
}

/// Bytes per component under the dense accounting (adjacency as `N²` bits).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MemoryReport {
    pub adjacency: f64,
    pub features: f64,
    pub codebooks: f64,
    pub landmark_histograms: f64,
    pub projection: f64,
    pub prototypes: f64,
    pub parameters: f64,
    pub inputs: f64,
    pub total: f64,
    pub projection_share_of_parameters: f64,
}

pub fn memory_footprint(w: &WorkloadParams) -> MemoryReport {
    let b = &w.bits;
    let to_bytes = |bits: u64| bits as f64 / 8.0;
    let sum_b: u64 = w.codebook_sizes.iter().sum();
    let adjacency = to_bytes(w.nodes * w.nodes * b.adjacency);
    let features = to_bytes(w.nodes * w.features * b.features);
    let codebooks = to_bytes(sum_b * b.codebook);
    let landmark_histograms = to_bytes(w.landmarks * sum_b * b.histogram);
    let projection = to_bytes(w.dim * w.landmarks * b.projection);
    let prototypes = to_bytes(w.classes * w.dim * b.prototype);
    let parameters = codebooks + landmark_histograms + projection + prototypes;
    let inputs = adjacency + features;
    MemoryReport {
        adjacency,
        features,
        codebooks,
        landmark_histograms,
        projection,
        prototypes,
        parameters,
        inputs,
        total: parameters + inputs,
        projection_share_of_parameters: if parameters > 0.0 {
            projection / parameters
        } else {
            0.0
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    pub peak_ops_per_s: f64,
    pub bandwidth_bytes_per_s: f64,
    pub transfer_width_bits: u32,
    pub operand_bits: u32,
}

impl Default for MachineParams {
    /// The 19.2 GOPS / 17.3 GB/s board with a 512-bit bus and FP32 operands.
    fn default() -> Self {
        Self {
            peak_ops_per_s: 19.2e9,
            bandwidth_bytes_per_s: 17.3e9,
            transfer_width_bits: 512,
            operand_bits: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RooflineReport {
    pub arithmetic_intensity: f64,
    pub machine_balance: f64,
    pub memory_bound: bool,
    pub attainable_ops_per_s: f64,
    pub operands_per_transfer: u32,
}

/// Projection streams one `x`-bit weight per MAC (2 ops), so
/// `AI = 2 / (x/8)` ops per byte.
pub fn roofline(mp: &MachineParams) -> RooflineReport {
    let ai = 2.0 / (mp.operand_bits as f64 / 8.0);
    let balance = mp.peak_ops_per_s / mp.bandwidth_bytes_per_s;
    RooflineReport {
        arithmetic_intensity: ai,
        machine_balance: balance,
        memory_bound: ai < balance,
        attainable_ops_per_s: mp.peak_ops_per_s.min(ai * mp.bandwidth_bytes_per_s),
        operands_per_transfer: mp.transfer_width_bits / mp.operand_bits.max(1),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerfReport {
    pub schema: u32,
    pub workload: WorkloadParams,
    pub ops: OpReport,
    pub memory: MemoryReport,
    pub machine: MachineParams,
    pub roofline: RooflineReport,
}

pub fn perf_report(w: &WorkloadParams, mp: &MachineParams) -> PerfReport {
    PerfReport {
        schema: REPORT_SCHEMA,
        workload: w.clone(),
        ops: op_count(w),
        memory: memory_footprint(w),
        machine: *mp,
        roofline: roofline(mp),
    }
}
