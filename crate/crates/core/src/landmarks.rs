//! Landmark selection: a uniform candidate pool narrowed by a k-DPP over the
//! propagation-kernel similarities, so the chosen landmarks are diverse.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, GraphCsr};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, DenseMatrix, SplitMix64, DEFAULT_EPS_REL};
use crate::propkernel::{build_codebooks, gram_matrix, graph_histograms, Codebook, LshParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkMethod {
    Uniform,
    Dpp,
    /// k-DPP ran out of rank and the remainder was drawn uniformly.
    DppUniformTopUp,
}

impl LandmarkMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkMethod::Uniform => "uniform",
            LandmarkMethod::Dpp => "dpp",
            LandmarkMethod::DppUniformTopUp => "dpp_uniform_top_up",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [Self::Uniform, Self::Dpp, Self::DppUniformTopUp]
            .into_iter()
            .find(|m| m.code() == c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    /// Training-set indices, ascending.
    pub indices: Vec<usize>,
    /// Kernel among the selected graphs, in `indices` order.
    pub kernel: DenseMatrix,
    pub method: LandmarkMethod,
}

/// `pool_size` distinct indices from `0..n`: the prefix of a partial
/// Fisher–Yates shuffle.
pub fn uniform_pool(n: usize, pool_size: usize, rng: &mut SplitMix64) -> Result<Vec<usize>> {
    if pool_size > n {
        return Err(Error::InvalidArgument(format!("pool size {pool_size} > {n} items")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..pool_size {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(pool_size);
    Ok(idx)
}

pub fn kernel_over_pool(pool: &[&GraphCsr], p: &LshParams, cb: &Codebook) -> Result<DenseMatrix> {
    if pool.is_empty() {
        return Err(Error::InvalidArgument("empty pool".into()));
    }
    let hists = pool
        .par_iter()
        .map(|g| graph_histograms(g, p, cb))
        .collect::<Result<Vec<_>>>()?;
    Ok(gram_matrix(&hists))
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `e[l][n] = log e_l(λ_1..λ_n)` for `l ≤ k`.
fn log_elementary_symmetric(log_lambda: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = log_lambda.len();
    let mut e = vec![vec![f64::NEG_INFINITY; n + 1]; k + 1];
    e[0].iter_mut().for_each(|v| *v = 0.0);
    for l in 1..=k {
        for i in 1..=n {
            e[l][i] = log_add_exp(e[l][i - 1], log_lambda[i - 1] + e[l - 1][i - 1]);
        }
    }
    e
}

fn positive_spectrum(lambda: &[f64]) -> (Vec<f64>, usize) {
    let max = lambda.iter().copied().fold(0.0, f64::max);
    let cut = DEFAULT_EPS_REL * max;
    let clamped: Vec<f64> = lambda
        .iter()
        .map(|&l| if l > cut && l > 0.0 { l } else { 0.0 })
        .collect();
    let positive = clamped.iter().filter(|&&l| l > 0.0).count();
    (clamped, positive)
}

/// Draws an `s`-subset with probability proportional to `det(K_S)`, using
/// `K` itself as the L-ensemble. Negative eigenvalues are clamped to zero.
pub fn kdpp_sample(kernel: &DenseMatrix, s: usize, rng: &mut SplitMix64) -> Result<Vec<usize>> {
    if !kernel.is_square() {
        return Err(Error::DimensionMismatch("kernel must be square".into()));
    }
    let m = kernel.rows();
    if s == 0 || s > m {
        return Err(Error::InvalidArgument(format!("k-DPP size {s} for {m} items")));
    }
    let eig = sym_eigen(kernel)?;
    let (lambda, positive) = positive_spectrum(&eig.values);
    if positive < s {
        return Err(Error::InsufficientRank {
            requested: s,
            available: positive,
        });
    }

    // phase 1: pick exactly s eigenvectors
    let log_lambda: Vec<f64> = lambda.iter().map(|&l| l.ln()).collect();
    let e = log_elementary_symmetric(&log_lambda, s);
    let mut chosen = Vec::with_capacity(s);
    let mut l = s;
    for n in (1..=m).rev() {
        if l == 0 {
            break;
        }
        let denom = e[l][n];
        let p = if denom == f64::NEG_INFINITY {
            0.0
        } else {
            (log_lambda[n - 1] + e[l - 1][n - 1] - denom).exp()
        };
        // once the remaining items are exactly the remaining budget, take them
        if n == l || rng.next_f64() < p {
            chosen.push(n - 1);
            l -= 1;
        }
    }

    // phase 2: sample items from the spanned subspace
    let mut basis: Vec<Vec<f64>> = chosen.iter().map(|&k| eig.column(k)).collect();
    let mut items = Vec::with_capacity(s);
    while !basis.is_empty() {
        let weights: Vec<f64> = (0..m)
            .map(|i| basis.iter().map(|v| v[i] * v[i]).sum())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.next_f64() * total;
        let mut pick = m - 1;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 || items.contains(&i) {
                continue;
            }
            pick = i;
            if u < w {
                break;
            }
            u -= w;
        }
        items.push(pick);

        // eliminate the coordinate `pick` from the span and drop one vector
        let j = (0..basis.len())
            .max_by(|&a, &b| basis[a][pick].abs().total_cmp(&basis[b][pick].abs()))
            .expect("nonempty basis");
        let pivot = basis.swap_remove(j);
        for v in basis.iter_mut() {
            let f = v[pick] / pivot[pick];
            for (x, &y) in v.iter_mut().zip(&pivot) {
                *x -= f * y;
            }
        }
        gram_schmidt(&mut basis);
    }
    Ok(items)
}

fn gram_schmidt(vs: &mut [Vec<f64>]) {
    for i in 0..vs.len() {
        for k in 0..i {
            let d: f64 = vs[i].iter().zip(&vs[k]).map(|(a, b)| a * b).sum();
            let (head, tail) = vs.split_at_mut(i);
            for (x, &y) in tail[0].iter_mut().zip(&head[k]) {
                *x -= d * y;
            }
        }
        let norm = vs[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            vs[i].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// `Σ ln max(λ_i, floor)`, with `floor = floor_rel · max(1, λ_max)` so that
/// singular kernels give a large negative but finite value.
pub fn log_det_psd(k: &DenseMatrix, floor_rel: f64) -> Result<f64> {
    let eig = sym_eigen(k)?;
    let max = eig.values.first().copied().unwrap_or(0.0).max(1.0);
    let floor = floor_rel * max;
    Ok(eig.values.iter().map(|&l| l.max(floor).ln()).sum())
}

fn validate_size(train: &Dataset, s: usize) -> Result<()> {
    if s == 0 || s > train.len() {
        return Err(Error::InvalidArgument(format!(
            "landmark count s = {s} must be in 1..={} (training graphs)",
            train.len()
        )));
    }
    Ok(())
}

fn finish(
    train: &Dataset,
    mut indices: Vec<usize>,
    p: &LshParams,
    method: LandmarkMethod,
) -> Result<LandmarkSet> {
    indices.sort_unstable();
    let graphs: Vec<&GraphCsr> = indices.iter().map(|&i| &train.graphs[i]).collect();
    let cb = build_codebooks(&graphs, p)?;
    let kernel = kernel_over_pool(&graphs, p, &cb)?;
    Ok(LandmarkSet {
        indices,
        kernel,
        method,
    })
}

/// `s` landmarks uniformly without replacement.
pub fn uniform_select(train: &Dataset, s: usize, p: &LshParams, rng: &mut SplitMix64) -> Result<LandmarkSet> {
    validate_size(train, s)?;
    let idx = uniform_pool(train.len(), s, rng)?;
    finish(train, idx, p, LandmarkMethod::Uniform)
}

/// Uniform pool of `min(n, ⌈pool_factor·s⌉)` graphs, a provisional codebook
/// and kernel over that pool, then a k-DPP draw of `s`. If the pool kernel
/// has rank below `s` the DPP takes what the rank allows and the rest is
/// drawn uniformly from the unused pool. The returned kernel is evaluated
/// under a codebook built from the selected graphs only.
pub fn hybrid_select(
    train: &Dataset,
    s: usize,
    pool_factor: f64,
    p: &LshParams,
    rng: &mut SplitMix64,
) -> Result<LandmarkSet> {
    validate_size(train, s)?;
    if !(pool_factor >= 1.0 && pool_factor.is_finite()) {
        return Err(Error::InvalidArgument(format!("pool factor {pool_factor} must be >= 1")));
    }
    let n = train.len();
    let pool_size = ((pool_factor * s as f64).ceil() as usize).clamp(s, n);
    let pool = uniform_pool(n, pool_size, rng)?;
    let graphs: Vec<&GraphCsr> = pool.iter().map(|&i| &train.graphs[i]).collect();
    let cb = build_codebooks(&graphs, p)?;
    let k = kernel_over_pool(&graphs, p, &cb)?;

    let (picked, method) = match kdpp_sample(&k, s, rng) {
        Ok(v) => (v, LandmarkMethod::Dpp),
        Err(Error::InsufficientRank { available, .. }) => {
            log::warn!("pool kernel rank {available} < s = {s}; topping up uniformly");
            let mut v = if available > 0 {
                kdpp_sample(&k, available, rng)?
            } else {
                Vec::new()
            };
            let mut rest: Vec<usize> = (0..pool_size).filter(|i| !v.contains(i)).collect();
            rng.shuffle(&mut rest);
            v.extend(rest.into_iter().take(s - v.len()));
            (v, LandmarkMethod::DppUniformTopUp)
        }
        Err(e) => return Err(e),
    };
    let indices = picked.into_iter().map(|i| pool[i]).collect();
    finish(train, indices, p, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use std::collections::HashMap;

    #[test]
    fn full_pool_is_permutation() {
        let mut v = uniform_pool(5, 5, &mut SplitMix64::new(1)).unwrap();
        v.sort_unstable();
        assert_eq!(v, vec![0, 1, 2, 3, 4]);
        assert!(uniform_pool(3, 4, &mut SplitMix64::new(1)).is_err());
    }

    #[test]
    fn pool_deterministic() {
        let a = uniform_pool(1000, 100, &mut SplitMix64::new(8)).unwrap();
        let b = uniform_pool(1000, 100, &mut SplitMix64::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pool_frequencies_uniform() {
        let (n, k, trials) = (20usize, 5usize, 10_000usize);
        let mut counts = vec![0f64; n];
        let mut rng = SplitMix64::new(3);
        for _ in 0..trials {
            for i in uniform_pool(n, k, &mut rng).unwrap() {
                counts[i] += 1.0;
            }
        }
        let p = k as f64 / n as f64;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c - mean).abs() < 3.0 * sd + 1.0, "count {c} vs {mean}");
        }
    }

    #[test]
    fn pool_kernel_cases() {
        let mut rng = SplitMix64::new(2);
        let g = synth::random_graph(&mut rng, 6, 0.4, 3, 0);
        let p = LshParams::sample(&mut rng, 3, 2, 1.0).unwrap();
        let cb = build_codebooks(&[&g], &p).unwrap();
        let k1 = kernel_over_pool(&[&g], &p, &cb).unwrap();
        assert!(k1[(0, 0)] > 0.0);
        let k2 = kernel_over_pool(&[&g, &g], &p, &cb).unwrap();
        assert_eq!(k2[(0, 0)], k2[(0, 1)]);
        assert_eq!(k2[(1, 1)], k2[(0, 1)]);
    }

    #[test]
    fn pool_kernel_matches_pairwise() {
        let mut rng = SplitMix64::new(12);
        let gs: Vec<GraphCsr> = (0..8).map(|_| synth::random_graph(&mut rng, 10, 0.3, 4, 0)).collect();
        let refs: Vec<&GraphCsr> = gs.iter().collect();
        let p = LshParams::sample(&mut rng, 4, 3, 1.0).unwrap();
        let cb = build_codebooks(&refs, &p).unwrap();
        let k = kernel_over_pool(&refs, &p, &cb).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let v = crate::propkernel::propagation_kernel(&gs[i], &gs[j], &p, &cb).unwrap();
                assert_eq!(k[(i, j)], v as f64);
            }
        }
    }

    #[test]
    fn kdpp_trivial_and_null_item() {
        let mut rng = SplitMix64::new(4);
        let two = DenseMatrix::from_diag(&[2.0, 2.0]);
        let mut v = kdpp_sample(&two, 2, &mut rng).unwrap();
        v.sort_unstable();
        assert_eq!(v, vec![0, 1]);
        let k = DenseMatrix::from_diag(&[1.0, 1.0, 0.0]);
        for _ in 0..1000 {
            let mut v = kdpp_sample(&k, 2, &mut rng).unwrap();
            v.sort_unstable();
            assert_eq!(v, vec![0, 1]);
        }
        assert!(matches!(
            kdpp_sample(&k, 3, &mut rng),
            Err(Error::InsufficientRank { requested: 3, available: 2 })
        ));
    }

    fn det3(k: &DenseMatrix, s: [usize; 3]) -> f64 {
        let a = |i: usize, j: usize| k[(s[i], s[j])];
        a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
            + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
    }

    #[test]
    fn kdpp_clusters_one_per_cluster() {
        let mut rng = SplitMix64::new(6);
        let m = 9;
        let feats = DenseMatrix::from_fn(m, m, |i, j| {
            (if j == i / 3 { 1.0 } else { 0.0 }) + 0.02 * rng.next_gaussian()
        });
        let k = feats.matmul(&feats.transpose()).unwrap();
        let k = DenseMatrix::from_fn(m, m, |i, j| 0.5 * (k[(i, j)] + k[(j, i)]));

        // exact probability of one-per-cluster by enumerating all 3-subsets
        let (mut z, mut good) = (0.0, 0.0);
        for a in 0..m {
            for b in a + 1..m {
                for c in b + 1..m {
                    let d = det3(&k, [a, b, c]).max(0.0);
                    z += d;
                    if a / 3 != b / 3 && b / 3 != c / 3 && a / 3 != c / 3 {
                        good += d;
                    }
                }
            }
        }
        let p = good / z;
        assert!(p >= 0.95, "exact {p}");

        let trials = 1000;
        let hits = (0..trials)
            .filter(|_| {
                let v = kdpp_sample(&k, 3, &mut rng).unwrap();
                let mut c: Vec<usize> = v.iter().map(|i| i / 3).collect();
                c.sort_unstable();
                c == vec![0, 1, 2]
            })
            .count() as f64;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - trials as f64 * p).abs() <= 3.0 * sd + 1.0, "{hits} vs {p}");
        assert!(hits >= 0.95 * trials as f64, "{hits}");
    }

    #[test]
    fn kdpp_diagonal_distribution() {
        let lam = [3.0, 2.0, 1.0, 0.5];
        let k = DenseMatrix::from_diag(&lam);
        let mut rng = SplitMix64::new(17);
        let trials = 10_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..trials {
            let mut v = kdpp_sample(&k, 2, &mut rng).unwrap();
            v.sort_unstable();
            *counts.entry(v).or_default() += 1;
        }
        let mut z = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                z += lam[i] * lam[j];
            }
        }
        for i in 0..4 {
            for j in i + 1..4 {
                let p = lam[i] * lam[j] / z;
                let c = *counts.get(&vec![i, j]).unwrap_or(&0) as f64;
                let sd = (trials as f64 * p * (1.0 - p)).sqrt();
                assert!((c - trials as f64 * p).abs() <= 3.0 * sd, "{i}{j}: {c}");
            }
        }
    }

    #[test]
    fn elementary_symmetric_small() {
        let l = [1f64, 2.0, 3.0];
        let e = log_elementary_symmetric(&l.map(f64::ln), 3);
        assert!((e[1][3].exp() - 6.0).abs() < 1e-12);
        assert!((e[2][3].exp() - 11.0).abs() < 1e-12);
        assert!((e[3][3].exp() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn hybrid_full_and_deterministic() {
        let ds = synth::labeled_dataset(&mut SplitMix64::new(1), 12, 2, 4, (6, 10));
        let p = LshParams::sample(&mut SplitMix64::new(2), 4, 3, 1.0).unwrap();
        let all = hybrid_select(&ds, 12, 1.0, &p, &mut SplitMix64::new(3)).unwrap();
        assert_eq!(all.indices, (0..12).collect::<Vec<_>>());
        let a = hybrid_select(&ds, 5, 2.0, &p, &mut SplitMix64::new(9)).unwrap();
        let b = hybrid_select(&ds, 5, 2.0, &p, &mut SplitMix64::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kernel.rows(), 5);
        assert!(hybrid_select(&ds, 13, 2.0, &p, &mut SplitMix64::new(9)).is_err());
    }

    #[test]
    fn duplicates_trigger_top_up() {
        let ds = synth::clustered_dataset(&mut SplitMix64::new(5), 2, 6, 8, 3);
        let p = LshParams::sample(&mut SplitMix64::new(6), 3, 2, 1.0).unwrap();
        let sel = hybrid_select(&ds, 5, 2.0, &p, &mut SplitMix64::new(7)).unwrap();
        assert_eq!(sel.method, LandmarkMethod::DppUniformTopUp);
        let mut v = sel.indices.clone();
        v.dedup();
        assert_eq!(v.len(), 5);
    }
}
