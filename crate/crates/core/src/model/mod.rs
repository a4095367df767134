//! Training and inference for the Nyström hypervector classifier.
//!
//! A query graph is reduced to per-hop LSH code histograms, compared with
//! every landmark through sparse histogram matrices, projected to `d`
//! dimensions by the Nyström map and bipolarized; the class whose bundled
//! prototype agrees most wins.

mod infer;
mod io;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GraphCsr};
use crate::error::{Error, Result};
use crate::landmarks::{hybrid_select, uniform_select, LandmarkMethod, LandmarkSet};
use crate::linalg::{gaussian_matrix, pinv_sqrt_project, sym_eigen, DenseMatrix, SplitMix64, DEFAULT_EPS_REL};
use crate::mph::{MphTable, MphStats, DEFAULT_GAMMA};
use crate::perfmodel::{memory_footprint, BitWidths, MemoryReport, WorkloadParams};
use crate::propkernel::{build_codebooks, gram_matrix, graph_histograms, Codebook, GraphHistograms, LshParams};
use crate::schedule::{build_schedule, ScheduleTable, SparseMatrixCsr};

pub use infer::{
    classify, encode, encode_counted, evaluate, predict, Encoding, EvalReport, InferOptions, LookupEngine,
};
pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hypervector length `d`.
    pub dim: usize,
    /// Landmark count `s`.
    pub landmarks: usize,
    pub hops: usize,
    pub width: f64,
    pub gamma: f64,
    pub pool_factor: f64,
    pub dpp: bool,
    /// Lane count the cached landmark schedules are built for.
    pub lanes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 4096,
            landmarks: 64,
            hops: crate::propkernel::DEFAULT_HOPS,
            width: crate::propkernel::DEFAULT_WIDTH,
            gamma: DEFAULT_GAMMA,
            pool_factor: 4.0,
            dpp: true,
            lanes: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.landmarks == 0 {
            return bad("landmarks must be positive".into());
        }
        if self.hops == 0 || self.hops > crate::propkernel::MAX_HOPS {
            return bad(format!("hops {} not in 1..={}", self.hops, crate::propkernel::MAX_HOPS));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return bad(format!("width {} must be > 0", self.width));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be >= 1", self.gamma));
        }
        if !(self.pool_factor >= 1.0 && self.pool_factor.is_finite()) {
            return bad(format!("pool_factor {} must be >= 1", self.pool_factor));
        }
        if self.lanes == 0 {
            return bad("lanes must be positive".into());
        }
        Ok(())
    }
}

/// Bipolar vector packed one bit per entry; a set bit means `−1`, so the
/// all-zero vector is all `+1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl Hypervector {
    pub fn positive(dim: usize) -> Self {
        Self {
            dim,
            words: vec![0; dim.div_ceil(64)],
        }
    }

    pub fn from_bipolar(v: &[i8]) -> Self {
        let mut h = Self::positive(v.len());
        for (i, &x) in v.iter().enumerate() {
            if x < 0 {
                h.set_negative(i);
            }
        }
        h
    }

    /// Sign of each sum, zero going to `+1`.
    pub fn from_sums(sums: &[i64]) -> Self {
        let mut h = Self::positive(sums.len());
        for (i, &x) in sums.iter().enumerate() {
            if x < 0 {
                h.set_negative(i);
            }
        }
        h
    }

    #[inline]
    pub(crate) fn set_negative(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != dim.div_ceil(64) {
            return Err(Error::corrupt("hypervector", "word count"));
        }
        if !dim.is_multiple_of(64) {
            if let Some(&last) = words.last() {
                if last >> (dim % 64) != 0 {
                    return Err(Error::corrupt("hypervector", "padding bits set"));
                }
            }
        }
        Ok(Self { dim, words })
    }

    #[inline]
    pub fn get(&self, i: usize) -> i8 {
        if self.words[i / 64] >> (i % 64) & 1 == 1 {
            -1
        } else {
            1
        }
    }

    pub fn to_bipolar(&self) -> Vec<i8> {
        (0..self.dim).map(|i| self.get(i)).collect()
    }

    /// `Σ a_i b_i = d − 2·hamming(a, b)`.
    #[inline]
    pub fn dot(&self, other: &Hypervector) -> i64 {
        let ham: u32 = self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones()).sum();
        self.dim as i64 - 2 * ham as i64
    }
}

/// Nyström projection held at single precision, row-major `d × s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Projection {
    pub fn from_dense(m: &DenseMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::corrupt("projection", "size"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub(crate) config: ModelConfig,
    pub(crate) lsh: LshParams,
    pub(crate) codebook: Codebook,
    pub(crate) mph: Vec<MphTable>,
    pub(crate) landmark_hists: Vec<SparseMatrixCsr>,
    pub(crate) projection: Projection,
    pub(crate) prototypes: Vec<Hypervector>,
    pub(crate) feature_dim: usize,
    pub(crate) landmark_indices: Vec<usize>,
    pub(crate) method: LandmarkMethod,
    pub(crate) class_values: Vec<i64>,
    pub(crate) node_label_values: Option<Vec<i64>>,
    pub(crate) schedules: Vec<ScheduleTable>,
    pub(crate) code_maps: Vec<HashMap<i64, u32>>,
}

impl PartialEq for TrainedModel {
    fn eq(&self, o: &Self) -> bool {
        self.config == o.config
            && self.lsh == o.lsh
            && self.codebook == o.codebook
            && self.mph == o.mph
            && self.landmark_hists == o.landmark_hists
            && self.projection == o.projection
            && self.prototypes == o.prototypes
            && self.feature_dim == o.feature_dim
            && self.landmark_indices == o.landmark_indices
            && self.method == o.method
            && self.class_values == o.class_values
            && self.node_label_values == o.node_label_values
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelSummary {
    pub dim: usize,
    pub landmarks: usize,
    pub classes: usize,
    pub features: usize,
    pub hops: usize,
    pub landmark_method: LandmarkMethod,
    pub codebook_sizes: Vec<usize>,
    pub histogram_nnz: Vec<usize>,
    pub mph: Vec<MphStats>,
    pub parameter_bytes: ArtifactBytes,
    /// Dense per-component accounting of the parameters (no query inputs).
    pub parameter_accounting: MemoryReport,
}

/// Bytes the in-memory artifact actually occupies per component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ArtifactBytes {
    pub codebooks: usize,
    pub landmark_histograms: usize,
    pub mph: usize,
    pub projection: usize,
    pub prototypes: usize,
    pub total: usize,
}

impl TrainedModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        config: ModelConfig,
        lsh: LshParams,
        codebook: Codebook,
        mph: Vec<MphTable>,
        landmark_hists: Vec<SparseMatrixCsr>,
        projection: Projection,
        prototypes: Vec<Hypervector>,
        feature_dim: usize,
        meta: (Vec<usize>, LandmarkMethod, Vec<i64>, Option<Vec<i64>>),
    ) -> Result<Self> {
        let schedules = landmark_hists
            .iter()
            .map(|h| build_schedule(h, config.lanes))
            .collect::<Result<Vec<_>>>()?;
        let code_maps = (0..codebook.hops())
            .map(|t| {
                codebook
                    .codes(t)
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (c, i as u32))
                    .collect()
            })
            .collect();
        let m = Self {
            config,
            lsh,
            codebook,
            mph,
            landmark_hists,
            projection,
            prototypes,
            feature_dim,
            landmark_indices: meta.0,
            method: meta.1,
            class_values: meta.2,
            node_label_values: meta.3,
            schedules,
            code_maps,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::corrupt("model", m));
        let h = self.config.hops;
        let s = self.config.landmarks;
        let d = self.config.dim;
        if self.lsh.hops() != h || self.codebook.hops() != h || self.mph.len() != h || self.landmark_hists.len() != h {
            return bad("per-hop component count differs from hops".into());
        }
        if self.lsh.feature_dim() != self.feature_dim {
            return bad("LSH projection length differs from feature dim".into());
        }
        for t in 0..h {
            if self.codebook.len(t) == 0 {
                return bad(format!("hop {t} codebook is empty"));
            }
            let mut keys: Vec<i64> = self.mph[t].keys().collect();
            keys.sort_unstable();
            if keys != self.codebook.codes(t) {
                return bad(format!("hop {t} MPH keys differ from codebook"));
            }
            for &c in self.codebook.codes(t) {
                if self.mph[t].lookup(c) != self.codebook.index(t, c) {
                    return bad(format!("hop {t} MPH value for code {c} differs from rank"));
                }
            }
            let hm = &self.landmark_hists[t];
            if hm.rows() != s || hm.cols() != self.codebook.len(t) {
                return bad(format!("hop {t} histogram matrix shape"));
            }
            if hm.values().iter().any(|&v| !(v >= 1.0 && v.fract() == 0.0)) {
                return bad(format!("hop {t} histogram values must be positive integers"));
            }
        }
        if self.projection.rows() != d || self.projection.cols() != s {
            return bad("projection shape".into());
        }
        if self.prototypes.is_empty() || self.prototypes.iter().any(|p| p.dim() != d) {
            return bad("prototype shape".into());
        }
        if self.class_values.len() != self.prototypes.len() {
            return bad("class value count".into());
        }
        if self.landmark_indices.len() != s {
            return bad("landmark index count".into());
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn num_landmarks(&self) -> usize {
        self.config.landmarks
    }

    pub fn hops(&self) -> usize {
        self.config.hops
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn lsh(&self) -> &LshParams {
        &self.lsh
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn mph_tables(&self) -> &[MphTable] {
        &self.mph
    }

    pub fn landmark_histograms(&self) -> &[SparseMatrixCsr] {
        &self.landmark_hists
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn prototypes(&self) -> &[Hypervector] {
        &self.prototypes
    }

    pub fn landmark_indices(&self) -> &[usize] {
        &self.landmark_indices
    }

    pub fn landmark_method(&self) -> LandmarkMethod {
        self.method
    }

    pub fn class_values(&self) -> &[i64] {
        &self.class_values
    }

    pub fn node_label_values(&self) -> Option<&[i64]> {
        self.node_label_values.as_deref()
    }

    pub(crate) fn cached_schedule(&self, t: usize, lanes: usize) -> Option<&ScheduleTable> {
        (lanes == self.config.lanes).then(|| &self.schedules[t])
    }

    /// Landmark Gram matrix `H_Z`, rebuilt from the stored histograms.
    pub fn landmark_gram(&self) -> DenseMatrix {
        let s = self.num_landmarks();
        let mut k = DenseMatrix::zeros(s, s);
        for hm in &self.landmark_hists {
            let dense = hm.to_dense();
            let g = dense.matmul(&dense.transpose()).expect("shapes agree");
            for (o, v) in (0..s * s).zip(g.data()) {
                k[(o / s, o % s)] += v;
            }
        }
        k
    }

    pub fn workload(&self, g: &GraphCsr) -> WorkloadParams {
        self.workload_shape(g.num_nodes(), g.nnz())
    }

    /// Workload of a query with `nodes` nodes and `nnz` stored adjacency entries.
    pub fn workload_shape(&self, nodes: usize, nnz: usize) -> WorkloadParams {
        WorkloadParams {
            nodes: nodes as u64,
            features: self.feature_dim as u64,
            hops: self.hops() as u64,
            landmarks: self.num_landmarks() as u64,
            dim: self.dim() as u64,
            classes: self.num_classes() as u64,
            nnz_adjacency: nnz as u64,
            codebook_sizes: self.codebook.sizes().iter().map(|&b| b as u64).collect(),
            nnz_histograms: self.landmark_hists.iter().map(|h| h.nnz() as u64).collect(),
            bits: BitWidths::default(),
        }
    }

    pub fn artifact_bytes(&self) -> ArtifactBytes {
        let codebooks = self.codebook.sizes().iter().sum::<usize>() * 12;
        let landmark_histograms = self
            .landmark_hists
            .iter()
            .map(|h| 4 * (h.rows() + 1) + 8 * h.nnz())
            .sum();
        let mph = self.mph.iter().map(|m| m.to_bytes().len()).sum();
        let projection = 4 * self.projection.data.len();
        let prototypes = self.prototypes.iter().map(|p| 8 * p.words.len()).sum();
        ArtifactBytes {
            codebooks,
            landmark_histograms,
            mph,
            projection,
            prototypes,
            total: codebooks + landmark_histograms + mph + projection + prototypes,
        }
    }

    pub fn summary(&self) -> ModelSummary {
        let w = self.workload_shape(0, 0);
        ModelSummary {
            dim: self.dim(),
            landmarks: self.num_landmarks(),
            classes: self.num_classes(),
            features: self.feature_dim,
            hops: self.hops(),
            landmark_method: self.method,
            codebook_sizes: self.codebook.sizes(),
            histogram_nnz: self.landmark_hists.iter().map(SparseMatrixCsr::nnz).collect(),
            mph: self.mph.iter().map(MphTable::stats).collect(),
            parameter_bytes: self.artifact_bytes(),
            parameter_accounting: memory_footprint(&w),
        }
    }
}

/// Seed of the hop-`t` MPH table, derived from the model's master seed.
fn mph_seed(base: u64, t: usize) -> u64 {
    crate::linalg::mix64(base ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn histogram_matrix(hists: &[GraphHistograms], t: usize, cols: usize) -> Result<SparseMatrixCsr> {
    let rows: Vec<Vec<(usize, f64)>> = hists
        .iter()
        .map(|h| {
            h[t].iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(j, &c)| (j, c as f64))
                .collect()
        })
        .collect();
    SparseMatrixCsr::from_rows(cols, &rows)
}

/// Fits a model on `train_set`. All randomness comes from `rng`, so a fixed
/// seed gives a byte-identical model file.
pub fn train(train_set: &Dataset, cfg: &ModelConfig, rng: &mut SplitMix64) -> Result<TrainedModel> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if cfg.landmarks > train_set.len() {
        return Err(Error::InvalidArgument(format!(
            "landmark count s = {} exceeds training graphs n = {}",
            cfg.landmarks,
            train_set.len()
        )));
    }
    let counts = train_set.class_counts();
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::InvalidArgument(format!("class {c} has no training graphs")));
    }

    let mut lsh_rng = rng.fork();
    let mut lm_rng = rng.fork();
    let mut proj_rng = rng.fork();
    let mph_base = rng.next_u64();

    let lsh = LshParams::sample(&mut lsh_rng, train_set.feature_dim, cfg.hops, cfg.width)?;
    let LandmarkSet { indices, method, .. } = if cfg.dpp {
        hybrid_select(train_set, cfg.landmarks, cfg.pool_factor, &lsh, &mut lm_rng)?
    } else {
        uniform_select(train_set, cfg.landmarks, &lsh, &mut lm_rng)?
    };
    log::info!("selected {} landmarks ({})", indices.len(), method.as_str());

    let landmarks: Vec<&GraphCsr> = indices.iter().map(|&i| &train_set.graphs[i]).collect();
    let codebook = build_codebooks(&landmarks, &lsh)?;
    let hists = landmarks
        .iter()
        .map(|g| graph_histograms(g, &lsh, &codebook))
        .collect::<Result<Vec<_>>>()?;
    let mut mph = Vec::with_capacity(cfg.hops);
    let mut landmark_hists = Vec::with_capacity(cfg.hops);
    for t in 0..cfg.hops {
        let codes = codebook.codes(t);
        let vals: Vec<usize> = (0..codes.len()).collect();
        mph.push(MphTable::build(codes, &vals, cfg.gamma, mph_seed(mph_base, t))?);
        landmark_hists.push(histogram_matrix(&hists, t, codes.len())?);
    }

    let hz = gram_matrix(&hists);
    let eig = sym_eigen(&hz)?;
    let p_rp = gaussian_matrix(&mut proj_rng, cfg.dim, cfg.landmarks)?;
    let p_nys = pinv_sqrt_project(&eig, &p_rp, DEFAULT_EPS_REL)?;

    let placeholder = vec![Hypervector::positive(cfg.dim); train_set.num_classes];
    let mut model = TrainedModel::assemble(
        cfg.clone(),
        lsh,
        codebook,
        mph,
        landmark_hists,
        Projection::from_dense(&p_nys),
        placeholder,
        train_set.feature_dim,
        (
            indices,
            method,
            train_set.class_values.clone(),
            train_set.node_label_values.clone(),
        ),
    )?;

    let opts = InferOptions::default();
    let encoded = {
        use rayon::prelude::*;
        train_set
            .graphs
            .par_iter()
            .map(|g| encode(g, &model, &opts).map(|e| e.hv))
            .collect::<Result<Vec<_>>>()?
    };
    let mut sums = vec![vec![0i64; cfg.dim]; train_set.num_classes];
    for (g, hv) in train_set.graphs.iter().zip(&encoded) {
        let acc = &mut sums[g.label()];
        for (i, a) in acc.iter_mut().enumerate() {
            *a += hv.get(i) as i64;
        }
    }
    model.prototypes = sums.iter().map(|s| Hypervector::from_sums(s)).collect();
    Ok(model)
}

/// Nyström Gram estimate `Ĝ = C H_Z⁺ Cᵀ` over `graphs`, where row `i` of `C`
/// is the landmark kernel vector of graph `i`. Computed in double precision,
/// independent of the stored single-precision projection.
pub fn nystrom_gram(model: &TrainedModel, graphs: &[GraphCsr]) -> Result<DenseMatrix> {
    let eig = sym_eigen(&model.landmark_gram())?;
    let s = model.num_landmarks();
    let half = pinv_sqrt_project(&eig, &DenseMatrix::identity(s), DEFAULT_EPS_REL)?;
    let opts = InferOptions::default();
    let rows = graphs
        .iter()
        .map(|g| encode(g, model, &opts).map(|e| half.matvec(&e.kernel_vec)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let z = DenseMatrix::from_rows(&rows)?;
    z.matmul(&z.transpose())
}
