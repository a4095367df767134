//! Offline row schedules for lane-parallel CSR SpMV.
//!
//! Rows are grouped by nonzero count so that the `P` rows issued together in
//! one iteration carry similar work. Each lane owns the rows it is assigned,
//! so outputs are written without conflicts and the result does not depend
//! on how lanes interleave.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::GraphCsr;
use crate::error::{Error, Result};

/// Read-only CSR view shared by adjacency matrices and histogram matrices.
pub trait SparseRows {
    fn num_rows(&self) -> usize;
    fn num_cols(&self) -> usize;
    fn row_ptr(&self) -> &[usize];
    fn col_idx(&self) -> &[usize];
    fn value(&self, k: usize) -> f64;

    #[inline]
    fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr()[r + 1] - self.row_ptr()[r]
    }

    #[inline]
    fn total_nnz(&self) -> usize {
        self.row_ptr()[self.num_rows()]
    }

    #[inline]
    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_ptr()[r], self.row_ptr()[r + 1]);
        let cols = &self.col_idx()[lo..hi];
        let mut acc = 0.0;
        for (k, &c) in (lo..hi).zip(cols) {
            acc += self.value(k) * x[c];
        }
        acc
    }
}

impl SparseRows for GraphCsr {
    fn num_rows(&self) -> usize {
        self.num_nodes()
    }

    fn num_cols(&self) -> usize {
        self.num_nodes()
    }

    fn row_ptr(&self) -> &[usize] {
        GraphCsr::row_ptr(self)
    }

    fn col_idx(&self) -> &[usize] {
        GraphCsr::col_idx(self)
    }

    #[inline]
    fn value(&self, _k: usize) -> f64 {
        1.0
    }

    // Unit weights: skip the multiply.
    #[inline]
    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &c in self.neighbors(r) {
            acc += x[c];
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrixCsr {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseMatrixCsr {
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        val: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            val,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::corrupt("sparse matrix", msg));
        if self.row_ptr.len() != self.rows + 1 || self.row_ptr[0] != 0 {
            return bad("malformed row_ptr".into());
        }
        if self.row_ptr[self.rows] != self.col_idx.len() || self.col_idx.len() != self.val.len() {
            return bad("nnz disagreement between row_ptr, col_idx and val".into());
        }
        for r in 0..self.rows {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            if lo > hi {
                return bad(format!("row_ptr decreases at row {r}"));
            }
            let cols = &self.col_idx[lo..hi];
            if cols.iter().any(|&c| c >= self.cols) || cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {r} has out-of-range or unsorted columns"));
            }
        }
        if self.val.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse matrix values"));
        }
        Ok(())
    }

    /// Rows given as sorted `(column, value)` lists; zero values are dropped.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut val = Vec::new();
        for row in rows {
            for &(c, v) in row {
                if v != 0.0 {
                    col_idx.push(c);
                    val.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::new(rows.len(), cols, row_ptr, col_idx, val)
    }

    pub fn from_dense(m: &crate::linalg::DenseMatrix) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = (0..m.rows())
            .map(|i| m.row(i).iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect())
            .collect();
        Self::from_rows(m.cols(), &rows).expect("dense input is well formed")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.val
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].iter().copied().zip(self.val[lo..hi].iter().copied())
    }

    pub fn to_dense(&self) -> crate::linalg::DenseMatrix {
        let mut d = crate::linalg::DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }
}

impl SparseRows for SparseMatrixCsr {
    fn num_rows(&self) -> usize {
        self.rows
    }

    fn num_cols(&self) -> usize {
        self.cols
    }

    fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    #[inline]
    fn value(&self, k: usize) -> f64 {
        self.val[k]
    }
}

/// Row assignment for `num_lanes` lanes: entry `(i, j)` is the row handled by
/// lane `j` in iteration `i`, or [`ScheduleTable::PAD`] in the ragged tail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleTable {
    num_lanes: usize,
    num_rows: usize,
    assignment: Vec<usize>,
}

impl ScheduleTable {
    pub const PAD: usize = usize::MAX;

    fn from_order(order: &[usize], num_rows: usize, num_lanes: usize) -> Self {
        let iterations = num_rows.div_ceil(num_lanes);
        let mut assignment = vec![Self::PAD; iterations * num_lanes];
        assignment[..order.len()].copy_from_slice(order);
        Self {
            num_lanes,
            num_rows,
            assignment,
        }
    }

    /// Naive blocking: lane `j` owns the contiguous rows
    /// `j*ceil(N/P) .. (j+1)*ceil(N/P)` and walks them in order.
    pub fn contiguous(num_rows: usize, num_lanes: usize) -> Result<Self> {
        if num_lanes == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one lane".into()));
        }
        let iterations = num_rows.div_ceil(num_lanes);
        let mut assignment = vec![Self::PAD; iterations * num_lanes];
        for lane in 0..num_lanes {
            for it in 0..iterations {
                let row = lane * iterations + it;
                if row < num_rows {
                    assignment[it * num_lanes + lane] = row;
                }
            }
        }
        Ok(Self {
            num_lanes,
            num_rows,
            assignment,
        })
    }

    pub fn num_lanes(&self) -> usize {
        self.num_lanes
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_iterations(&self) -> usize {
        self.assignment.len() / self.num_lanes.max(1)
    }

    #[inline]
    pub fn entry(&self, iteration: usize, lane: usize) -> Option<usize> {
        let r = self.assignment[iteration * self.num_lanes + lane];
        (r != Self::PAD).then_some(r)
    }

    pub fn iteration(&self, i: usize) -> &[usize] {
        &self.assignment[i * self.num_lanes..(i + 1) * self.num_lanes]
    }

    pub fn lane_rows(&self, lane: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_iterations()).filter_map(move |i| self.entry(i, lane))
    }

    /// True when every row `0..N` appears exactly once.
    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.num_rows];
        for &r in &self.assignment {
            if r == Self::PAD {
                continue;
            }
            if r >= self.num_rows || std::mem::replace(&mut seen[r], true) {
                return false;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Groups rows by nonzero count (ascending, ties by row index) and issues
/// them `P` at a time, spilling into the next bucket when one runs short.
pub fn build_schedule<M: SparseRows + ?Sized>(m: &M, num_lanes: usize) -> Result<ScheduleTable> {
    if num_lanes == 0 {
        return Err(Error::InvalidArgument("schedule needs at least one lane".into()));
    }
    let n = m.num_rows();
    let nnz: Vec<usize> = (0..n).map(|r| m.row_nnz(r)).collect();
    let max_nnz = nnz.iter().copied().max().unwrap_or(0);

    // Counting sort into nnz buckets; rows stay in ascending order per bucket.
    let mut start = vec![0usize; max_nnz + 2];
    for &k in &nnz {
        start[k + 1] += 1;
    }
    for k in 0..=max_nnz {
        start[k + 1] += start[k];
    }
    let mut order = vec![0usize; n];
    for (r, &k) in nnz.iter().enumerate() {
        order[start[k]] = r;
        start[k] += 1;
    }
    Ok(ScheduleTable::from_order(&order, n, num_lanes))
}

fn check_dims<M: SparseRows + ?Sized>(m: &M, x: &[f64], sched: &ScheduleTable) -> Result<()> {
    if x.len() != m.num_cols() {
        return Err(Error::DimensionMismatch(format!(
            "SpMV with {} columns and vector of {}",
            m.num_cols(),
            x.len()
        )));
    }
    if sched.num_rows() != m.num_rows() {
        return Err(Error::DimensionMismatch(format!(
            "schedule built for {} rows, matrix has {}",
            sched.num_rows(),
            m.num_rows()
        )));
    }
    Ok(())
}

/// Textbook CSR SpMV; the reference for every scheduled variant.
pub fn spmv_reference<M: SparseRows + ?Sized>(m: &M, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != m.num_cols() {
        return Err(Error::DimensionMismatch(format!(
            "SpMV with {} columns and vector of {}",
            m.num_cols(),
            x.len()
        )));
    }
    Ok((0..m.num_rows()).map(|r| m.row_dot(r, x)).collect())
}

/// Iteration-by-iteration execution of `sched`; each issued row is reduced
/// in CSR order, so the output is bit-identical to [`spmv_reference`].
pub fn spmv_scheduled<M: SparseRows + ?Sized>(
    m: &M,
    x: &[f64],
    sched: &ScheduleTable,
) -> Result<Vec<f64>> {
    check_dims(m, x, sched)?;
    let mut out = vec![0.0; m.num_rows()];
    for i in 0..sched.num_iterations() {
        for &row in sched.iteration(i) {
            if row != ScheduleTable::PAD {
                out[row] = m.row_dot(row, x);
            }
        }
    }
    Ok(out)
}

/// Lanes run on the rayon pool; each lane returns its `(row, value)` pairs
/// which are then scattered into disjoint output slots.
pub fn spmv_scheduled_parallel<M: SparseRows + Sync + ?Sized>(
    m: &M,
    x: &[f64],
    sched: &ScheduleTable,
) -> Result<Vec<f64>> {
    check_dims(m, x, sched)?;
    let per_lane: Vec<Vec<(usize, f64)>> = (0..sched.num_lanes())
        .into_par_iter()
        .map(|lane| sched.lane_rows(lane).map(|r| (r, m.row_dot(r, x))).collect())
        .collect();
    let mut out = vec![0.0; m.num_rows()];
    for lane in per_lane {
        for (r, v) in lane {
            out[r] = v;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceReport {
    pub lanes: usize,
    pub iterations: usize,
    pub per_iteration_max: Vec<usize>,
    pub per_iteration_mean: Vec<f64>,
    /// `Σ_i max_j nnz(i, j) / (Σ nnz / P)`; 1.0 is perfect balance.
    pub scheduled_imbalance: f64,
    pub contiguous_imbalance: f64,
    /// Lock-step cost in nonzeros (sum of per-iteration maxima).
    pub scheduled_cost: usize,
    pub contiguous_cost: usize,
}

fn lockstep_cost<M: SparseRows + ?Sized>(m: &M, sched: &ScheduleTable) -> (Vec<usize>, Vec<f64>) {
    let mut maxes = Vec::with_capacity(sched.num_iterations());
    let mut means = Vec::with_capacity(sched.num_iterations());
    for i in 0..sched.num_iterations() {
        let loads = sched
            .iteration(i)
            .iter()
            .map(|&r| if r == ScheduleTable::PAD { 0 } else { m.row_nnz(r) });
        let (mut max, mut sum) = (0, 0);
        for l in loads {
            max = max.max(l);
            sum += l;
        }
        maxes.push(max);
        means.push(sum as f64 / sched.num_lanes() as f64);
    }
    (maxes, means)
}

fn imbalance(cost: usize, total: usize, lanes: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        cost as f64 / (total as f64 / lanes as f64)
    }
}

pub fn balance_report<M: SparseRows + ?Sized>(m: &M, sched: &ScheduleTable) -> Result<BalanceReport> {
    if sched.num_rows() != m.num_rows() {
        return Err(Error::DimensionMismatch("schedule/matrix row count".into()));
    }
    let lanes = sched.num_lanes();
    let total = m.total_nnz();
    let (per_iteration_max, per_iteration_mean) = lockstep_cost(m, sched);
    let scheduled_cost: usize = per_iteration_max.iter().sum();
    let contiguous = ScheduleTable::contiguous(m.num_rows(), lanes)?;
    let contiguous_cost: usize = lockstep_cost(m, &contiguous).0.iter().sum();
    Ok(BalanceReport {
        lanes,
        iterations: sched.num_iterations(),
        per_iteration_max,
        per_iteration_mean,
        scheduled_imbalance: imbalance(scheduled_cost, total, lanes),
        contiguous_imbalance: imbalance(contiguous_cost, total, lanes),
        scheduled_cost,
        contiguous_cost,
    })
}
