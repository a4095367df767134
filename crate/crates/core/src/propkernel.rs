//! Propagation-kernel machinery: per-hop p-stable LSH codes, landmark
//! codebooks, hop histograms and the kernel itself,
//! `K(x, z) = Σ_t h_x^(t) · h_z^(t)`.
//!
//! Codes can be produced two ways. The baseline propagates the whole feature
//! matrix, `M ← A M`, and projects each hop. The restructured form projects
//! first, `c = F u_t`, then applies `c ← A c` `t` times, so only length-`N`
//! vectors are ever live. Both compute `⌊(A^t F u_t + b_t) / w⌋`.

use serde::{Deserialize, Serialize};

use crate::dataset::GraphCsr;
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix, SplitMix64};
use crate::perfmodel::OpCounter;
use crate::schedule::SparseRows;

/// Largest quantized magnitude accepted before reporting a range error.
const CODE_LIMIT: f64 = 9.0e18;

pub const DEFAULT_WIDTH: f64 = 1.0;
pub const DEFAULT_HOPS: usize = 5;
pub const MAX_HOPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    projections: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    width: f64,
}

impl LshParams {
    pub fn new(projections: Vec<Vec<f64>>, offsets: Vec<f64>, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!("LSH width {width} must be > 0")));
        }
        if projections.is_empty() || projections.len() != offsets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} projections and {} offsets; need H >= 1 of each",
                projections.len(),
                offsets.len()
            )));
        }
        let f = projections[0].len();
        if projections.iter().any(|u| u.len() != f) {
            return Err(Error::DimensionMismatch("projection lengths differ".into()));
        }
        if projections.iter().flatten().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LSH parameters"));
        }
        Ok(Self {
            projections,
            offsets,
            width,
        })
    }

    /// Gaussian projections and offsets uniform on `[0, w)`.
    pub fn sample(rng: &mut SplitMix64, feature_dim: usize, hops: usize, width: f64) -> Result<Self> {
        if hops == 0 || hops > MAX_HOPS {
            return Err(Error::InvalidArgument(format!("hops {hops} not in 1..={MAX_HOPS}")));
        }
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature dimension 0".into()));
        }
        let mut projections = Vec::with_capacity(hops);
        let mut offsets = Vec::with_capacity(hops);
        for _ in 0..hops {
            projections.push((0..feature_dim).map(|_| rng.next_gaussian()).collect());
            offsets.push(rng.uniform(0.0, width));
        }
        Self::new(projections, offsets, width)
    }

    pub fn hops(&self) -> usize {
        self.projections.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.projections[0].len()
    }

    pub fn projection(&self, t: usize) -> &[f64] {
        &self.projections[t]
    }

    pub fn offset(&self, t: usize) -> f64 {
        self.offsets[t]
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    fn check(&self, g: &GraphCsr, t: usize) -> Result<()> {
        if t >= self.hops() {
            return Err(Error::InvalidArgument(format!("hop {t} >= H = {}", self.hops())));
        }
        if g.feature_dim() != self.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} features, LSH expects {}",
                g.feature_dim(),
                self.feature_dim()
            )));
        }
        Ok(())
    }
}

/// Which code-generation route to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CodePath {
    #[default]
    Restructured,
    Baseline,
}

/// `⌊v⌋` toward −∞ with a range check.
#[inline]
pub fn quantize(prefloor: f64) -> Result<i64> {
    if !prefloor.is_finite() {
        return Err(Error::NonFinite("LSH code"));
    }
    let q = prefloor.floor();
    if q.abs() > CODE_LIMIT {
        return Err(Error::NumericRange(format!("LSH code {q:e} exceeds i64 range")));
    }
    Ok(q as i64)
}

fn quantize_all(v: &[f64]) -> Result<Vec<i64>> {
    v.iter().map(|&x| quantize(x)).collect()
}

#[inline]
fn prefloor(projected: f64, p: &LshParams, t: usize) -> f64 {
    (projected + p.offset(t)) / p.width()
}

fn propagate_features(g: &GraphCsr, m: &DenseMatrix) -> Result<DenseMatrix> {
    let f = m.cols();
    let mut out = DenseMatrix::zeros(m.rows(), f);
    for i in 0..g.num_nodes() {
        let row = out.row_mut(i);
        for &j in g.neighbors(i) {
            for (o, &v) in row.iter_mut().zip(m.row(j)) {
                *o += v;
            }
        }
    }
    if out.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature propagation"));
    }
    Ok(out)
}

fn project_rows(m: &DenseMatrix, u: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| dot(m.row(i), u)).collect()
}

/// Pre-floor values `(M^(t) u_t + b_t) / w` via explicit feature propagation.
pub fn prefloor_baseline(g: &GraphCsr, p: &LshParams, t: usize) -> Result<Vec<f64>> {
    p.check(g, t)?;
    let mut m = g.features().clone();
    for _ in 0..t {
        m = propagate_features(g, &m)?;
    }
    Ok(project_rows(&m, p.projection(t))
        .into_iter()
        .map(|v| prefloor(v, p, t))
        .collect())
}

/// Pre-floor values `(A^t (F u_t) + b_t) / w` via repeated SpMV.
pub fn prefloor_restructured(g: &GraphCsr, p: &LshParams, t: usize) -> Result<Vec<f64>> {
    p.check(g, t)?;
    restructured_hop(g, p, t, &mut OpCounter::default(), |c| {
        Ok((0..g.num_nodes()).map(|r| g.row_dot(r, c)).collect())
    })
}

pub(crate) fn restructured_hop(
    g: &GraphCsr,
    p: &LshParams,
    t: usize,
    counter: &mut OpCounter,
    mut apply_adjacency: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    let mut c = project_rows(g.features(), p.projection(t));
    counter.lsh_macs += (n * p.feature_dim()) as u64;
    for _ in 0..t {
        c = apply_adjacency(&c)?;
        counter.propagation_macs += g.nnz() as u64;
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature propagation"));
    }
    Ok(c.into_iter().map(|v| prefloor(v, p, t)).collect())
}

pub fn lsh_codes_baseline(g: &GraphCsr, p: &LshParams, t: usize) -> Result<Vec<i64>> {
    quantize_all(&prefloor_baseline(g, p, t)?)
}

pub fn lsh_codes_restructured(g: &GraphCsr, p: &LshParams, t: usize) -> Result<Vec<i64>> {
    quantize_all(&prefloor_restructured(g, p, t)?)
}

/// Codes for every hop. The baseline route propagates the feature matrix
/// `H − 1` times in total; the restructured route starts each hop from
/// `F u_t`. MACs are tallied into `counter`.
pub fn all_hop_codes(
    g: &GraphCsr,
    p: &LshParams,
    path: CodePath,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<i64>>> {
    p.check(g, 0)?;
    let hops = p.hops();
    match path {
        CodePath::Restructured => (0..hops)
            .map(|t| {
                let v = restructured_hop(g, p, t, counter, |c| {
                    Ok((0..g.num_nodes()).map(|r| g.row_dot(r, c)).collect())
                })?;
                quantize_all(&v)
            })
            .collect(),
        CodePath::Baseline => baseline_all_hops(g, p, counter),
    }
}

pub(crate) fn baseline_all_hops(
    g: &GraphCsr,
    p: &LshParams,
    counter: &mut OpCounter,
) -> Result<Vec<Vec<i64>>> {
    let hops = p.hops();
    let n = g.num_nodes();
    let f = p.feature_dim();
    let mut m = g.features().clone();
    let mut out = Vec::with_capacity(hops);
    for t in 0..hops {
        let v: Vec<f64> = project_rows(&m, p.projection(t))
            .into_iter()
            .map(|x| prefloor(x, p, t))
            .collect();
        counter.lsh_macs += (n * f) as u64;
        out.push(quantize_all(&v)?);
        if t + 1 < hops {
            m = propagate_features(g, &m)?;
            counter.propagation_macs += (g.nnz() * f) as u64;
        }
    }
    Ok(out)
}

/// Per-hop vocabularies: sorted distinct codes seen on the landmark graphs.
/// A code's histogram bin is its rank in the sorted list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    hops: Vec<Vec<i64>>,
}

impl Codebook {
    pub fn from_sorted(hops: Vec<Vec<i64>>) -> Result<Self> {
        for (t, codes) in hops.iter().enumerate() {
            if codes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::corrupt(
                    "codebook",
                    format!("hop {t} codes not strictly increasing"),
                ));
            }
        }
        Ok(Self { hops })
    }

    pub fn hops(&self) -> usize {
        self.hops.len()
    }

    pub fn codes(&self, t: usize) -> &[i64] {
        &self.hops[t]
    }

    pub fn len(&self, t: usize) -> usize {
        self.hops[t].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.hops.iter().map(Vec::len).collect()
    }

    /// Bin of `code` at hop `t` by binary search.
    #[inline]
    pub fn index(&self, t: usize, code: i64) -> Option<usize> {
        self.hops[t].binary_search(&code).ok()
    }
}

pub fn codebook_from_codes<'a>(
    hops: usize,
    per_graph: impl IntoIterator<Item = &'a Vec<Vec<i64>>>,
) -> Codebook {
    let mut all: Vec<Vec<i64>> = vec![Vec::new(); hops];
    for codes in per_graph {
        for (t, c) in codes.iter().enumerate() {
            all[t].extend_from_slice(c);
        }
    }
    for v in &mut all {
        v.sort_unstable();
        v.dedup();
    }
    Codebook { hops: all }
}

pub fn build_codebooks(landmarks: &[&GraphCsr], p: &LshParams) -> Result<Codebook> {
    if landmarks.is_empty() {
        return Err(Error::InvalidArgument("codebook needs at least one landmark".into()));
    }
    let codes = landmarks
        .iter()
        .map(|g| all_hop_codes(g, p, CodePath::Restructured, &mut OpCounter::default()))
        .collect::<Result<Vec<_>>>()?;
    Ok(codebook_from_codes(p.hops(), &codes))
}

/// Counts per bin; codes outside the hop-`t` vocabulary are skipped.
pub fn build_histogram(codes: &[i64], cb: &Codebook, t: usize) -> Vec<u32> {
    let mut counts = vec![0u32; cb.len(t)];
    for &c in codes {
        if let Some(j) = cb.index(t, c) {
            counts[j] += 1;
        }
    }
    counts
}

/// One histogram per hop.
pub type GraphHistograms = Vec<Vec<u32>>;

pub fn graph_histograms(g: &GraphCsr, p: &LshParams, cb: &Codebook) -> Result<GraphHistograms> {
    let codes = all_hop_codes(g, p, CodePath::Restructured, &mut OpCounter::default())?;
    Ok(codes
        .iter()
        .enumerate()
        .map(|(t, c)| build_histogram(c, cb, t))
        .collect())
}

pub fn histogram_kernel(a: &GraphHistograms, b: &GraphHistograms) -> u64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| p as u64 * q as u64).sum::<u64>())
        .sum()
}

pub fn propagation_kernel(gx: &GraphCsr, gz: &GraphCsr, p: &LshParams, cb: &Codebook) -> Result<u64> {
    Ok(histogram_kernel(
        &graph_histograms(gx, p, cb)?,
        &graph_histograms(gz, p, cb)?,
    ))
}

/// Symmetric Gram matrix of propagation-kernel values.
pub fn gram_matrix(hists: &[GraphHistograms]) -> DenseMatrix {
    let n = hists.len();
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = histogram_kernel(&hists[i], &hists[j]) as f64;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}
