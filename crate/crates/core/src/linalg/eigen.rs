use super::DenseMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;
const MAX_ORDER: usize = 4096;

/// Relative eigenvalue cut-off used by [`pinv_sqrt_project`].
pub const DEFAULT_EPS_REL: f64 = 1e-10;

/// `m = Q diag(values) Qᵀ`, eigenvalues in descending order, eigenvectors in
/// the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    pub sweeps: usize,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.values.len();
        DenseMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)])
                .sum()
        })
    }

    /// `max |QᵀQ - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let q = &self.vectors;
        let qtq = q.transpose().matmul(q).expect("square");
        qtq.max_abs_diff(&DenseMatrix::identity(q.rows()))
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.rows()).map(|i| self.vectors[(i, k)]).collect()
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps until the largest off-diagonal magnitude drops below
/// `1e-12 * ||m||_F` or 100 sweeps have run.
pub fn sym_eigen(m: &DenseMatrix) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition of {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "eigensolver order {n} exceeds {MAX_ORDER}"
        )));
    }
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigensolver input"));
    }
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric(asym));
    }

    // Work on the symmetrized copy.
    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut v = DenseMatrix::identity(n);
    let tol = 1e-12 * m.frobenius_norm();

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let off = max_off_diagonal(&a);
        if off <= tol || off == 0.0 {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s, t);
            }
        }
    }
    if a.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigensolver iteration"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&k| a[(k, k)]).collect();
    let mut vectors = DenseMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    // Deterministic orientation: largest-magnitude component positive.
    for k in 0..n {
        let mut pivot = 0;
        for i in 1..n {
            if vectors[(i, k)].abs() > vectors[(pivot, k)].abs() {
                pivot = i;
            }
        }
        if vectors[(pivot, k)] < 0.0 {
            for i in 0..n {
                vectors[(i, k)] = -vectors[(i, k)];
            }
        }
    }
    Ok(EigenDecomposition {
        values,
        vectors,
        sweeps,
    })
}

fn max_off_diagonal(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max(a[(i, j)].abs());
        }
    }
    worst
}

#[inline]
fn rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let n = a.rows();
    let apq = a[(p, q)];
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[(k, p)] = new_kp;
        a[(p, k)] = new_kp;
        a[(k, q)] = new_kq;
        a[(q, k)] = new_kq;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// `P_rp · diag(λ⁺^{-1/2}) · Qᵀ`, where eigenvalues at or below
/// `eps_rel * λ_max` (including negative ones) are dropped.
pub fn pinv_sqrt_project(
    eig: &EigenDecomposition,
    p_rp: &DenseMatrix,
    eps_rel: f64,
) -> Result<DenseMatrix> {
    let s = eig.values.len();
    if p_rp.cols() != s {
        return Err(Error::DimensionMismatch(format!(
            "projection has {} columns, kernel order is {s}",
            p_rp.cols()
        )));
    }
    let lambda_max = eig.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lambda_max.is_nan() || lambda_max <= 0.0 {
        return Err(Error::DegenerateKernel(lambda_max));
    }
    let cutoff = eps_rel * lambda_max;
    let inv_sqrt: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l <= cutoff { 0.0 } else { 1.0 / l.sqrt() })
        .collect();
    // W = diag(inv_sqrt) Qᵀ
    let w = DenseMatrix::from_fn(s, s, |i, j| inv_sqrt[i] * eig.vectors[(j, i)]);
    p_rp.matmul(&w)
}
