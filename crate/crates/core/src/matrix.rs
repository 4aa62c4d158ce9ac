//! Dense matrices, the shifted power iteration for Metzler matrices and
//! rank-based multiplicity diagnostics.

use crate::error::{Error, Result};

/// Dense square matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    order: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Zero matrix of the given order.
    pub fn zeros(order: usize) -> Self {
        DenseMatrix {
            order,
            data: vec![0.0; order * order],
        }
    }

    /// Builds a matrix from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let order = rows.len();
        let mut data = Vec::with_capacity(order * order);
        for row in rows {
            if row.len() != order {
                return Err(Error::BadGrid(format!(
                    "row length {} does not match order {order}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(DenseMatrix { order, data })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.order + j] = value;
    }

    pub fn add_to(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.order + j] += value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    /// `out = self * v`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.order);
        debug_assert_eq!(out.len(), self.order);
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            *o = acc;
        }
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.order, other.order);
        let n = self.order;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn infinity_norm(&self) -> f64 {
        (0..self.order)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest absolute diagonal entry.
    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.order)
            .map(|i| self.get(i, i).abs())
            .fold(0.0, f64::max)
    }

    /// Checks that all off-diagonal entries are nonnegative.
    pub fn check_metzler(&self) -> Result<()> {
        for i in 0..self.order {
            for j in 0..self.order {
                let v = self.get(i, j);
                if i != j && v < 0.0 {
                    return Err(Error::NotMetzler { i, j, value: v });
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("matrix entry ({i}, {j}) = {v}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// True when every entry is nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    /// `self - lam * I`.
    pub fn shifted(&self, lam: f64) -> DenseMatrix {
        let mut out = self.clone();
        for i in 0..self.order {
            let v = out.get(i, i);
            out.set(i, i, v - lam);
        }
        out
    }
}

/// Outcome of the shifted power iteration.
#[derive(Debug, Clone)]
pub struct PerronResult {
    /// Rightmost eigenvalue of the Metzler matrix.
    pub eigenvalue: f64,
    /// Nonnegative eigenvector with unit sum.
    pub eigenvector: Vec<f64>,
    /// Iterations used.
    pub iterations: usize,
    /// Final residual in the sense `||M v - eigenvalue v||_1`.
    pub residual: f64,
    /// False when the limit vector has (numerically) zero components, which
    /// indicates a reducible matrix; the eigenpair is still valid.
    pub strictly_positive: bool,
}

/// Rightmost eigenvalue of a Metzler matrix by power iteration on the
/// nonnegative shift `M + sigma I` with `sigma = max |diagonal| + 1`.
///
/// Terminates when `||M v - lam v||_1 <= tol * (1 + |lam|)` for the unit-sum
/// iterate `v`. For reducible matrices the limit is some rightmost
/// nonnegative eigenpair; `strictly_positive` is cleared in that case.
pub fn perron_rightmost(m: &DenseMatrix, tol: f64, max_iter: usize) -> Result<PerronResult> {
    m.check_metzler()?;
    let n = m.order();
    if n == 0 {
        return Err(Error::BadGrid("empty matrix".into()));
    }
    let sigma = m.max_abs_diagonal() + 1.0;
    let mut v = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut last = (0.0, f64::INFINITY);
    for iter in 0..max_iter {
        // y = (M + sigma I) v
        m.matvec(&v, &mut y);
        for (yi, vi) in y.iter_mut().zip(&v) {
            *yi += sigma * vi;
        }
        let lam_shifted: f64 = y.iter().sum();
        if !lam_shifted.is_finite() || lam_shifted <= 0.0 {
            return Err(Error::NonFinite {
                context: format!("power iteration estimate {lam_shifted}"),
            });
        }
        let residual: f64 = y
            .iter()
            .zip(&v)
            .map(|(yi, vi)| (yi - lam_shifted * vi).abs())
            .sum();
        let eigenvalue = lam_shifted - sigma;
        last = (eigenvalue, residual);
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi / lam_shifted;
        }
        if residual <= tol * (1.0 + eigenvalue.abs()) {
            let floor = 1e-12 / n as f64;
            let strictly_positive = v.iter().all(|&c| c > floor);
            return Ok(PerronResult {
                eigenvalue,
                eigenvector: v,
                iterations: iter + 1,
                residual,
                strictly_positive,
            });
        }
    }
    Err(Error::NoConvergence {
        max_iter,
        estimate: last.0,
        residual: last.1,
    })
}

/// Numerical rank by Gaussian elimination with full pivoting; pivots at or
/// below `threshold` end the elimination.
pub fn rank_with_threshold(m: &DenseMatrix, threshold: f64) -> usize {
    let n = m.order();
    let mut a = m.clone();
    let mut rank = 0;
    for step in 0..n {
        // locate the largest remaining pivot
        let (mut pi, mut pj, mut pmax) = (step, step, 0.0_f64);
        for i in step..n {
            for j in step..n {
                let v = a.get(i, j).abs();
                if v > pmax {
                    pmax = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if pmax <= threshold {
            break;
        }
        // swap into position (rank only, so column order need not be tracked)
        for j in 0..n {
            let (x, y) = (a.get(step, j), a.get(pi, j));
            a.set(step, j, y);
            a.set(pi, j, x);
        }
        for i in 0..n {
            let (x, y) = (a.get(i, step), a.get(i, pj));
            a.set(i, step, y);
            a.set(i, pj, x);
        }
        let pivot = a.get(step, step);
        for i in step + 1..n {
            let factor = a.get(i, step) / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in step..n {
                let v = a.get(i, j) - factor * a.get(step, j);
                a.set(i, j, v);
            }
        }
        rank += 1;
    }
    rank
}

/// Geometric and algebraic multiplicity estimates of `lam` as an eigenvalue
/// of `m`, from rank defects of `(M - lam I)^k`.
///
/// `rank_tol` is relative: each power is ranked with threshold
/// `rank_tol * ||A^k||_inf`. `lam` should approximate an eigenvalue of the
/// matrix itself (not of an underlying continuum operator), otherwise no
/// defect is visible.
pub fn rank_multiplicity(m: &DenseMatrix, lam: f64, rank_tol: f64) -> (usize, usize) {
    const MAX_POWER: usize = 12;
    let n = m.order();
    let base = m.shifted(lam);
    let mut current = base.clone();
    let mut defect_prev = 0;
    let mut geometric = 0;
    for k in 1..=MAX_POWER {
        let norm = current.infinity_norm();
        if norm == 0.0 {
            // zero power: full defect
            if k == 1 {
                geometric = n;
            }
            return (geometric.max(1).min(n), n);
        }
        let rank = rank_with_threshold(&current, rank_tol * norm);
        let defect = n - rank;
        if k == 1 {
            geometric = defect;
            if defect == 0 {
                return (0, 0);
            }
        } else if defect <= defect_prev {
            return (geometric, defect_prev);
        }
        defect_prev = defect;
        current = current.matmul(&base);
    }
    (geometric, defect_prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perron_two_by_two() {
        let m = DenseMatrix::from_rows(&[vec![-1.0, 2.0], vec![3.0, -4.0]]).unwrap();
        let r = perron_rightmost(&m, 1e-12, 100_000).unwrap();
        let expected = (-5.0 + 33.0_f64.sqrt()) / 2.0;
        assert!((r.eigenvalue - expected).abs() <= 1e-8);
        assert!(r.eigenvector.iter().all(|&v| v > 0.0));
        assert!(r.strictly_positive);
        // residual contract
        let mut y = vec![0.0; 2];
        m.matvec(&r.eigenvector, &mut y);
        let res: f64 = y
            .iter()
            .zip(&r.eigenvector)
            .map(|(a, b)| (a - r.eigenvalue * b).abs())
            .sum();
        assert!(res <= 1e-12 * (1.0 + r.eigenvalue.abs()) * 10.0);
    }

    #[test]
    fn perron_rejects_non_metzler() {
        let m = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![0.0, 1.0]]).unwrap();
        match perron_rightmost(&m, 1e-10, 100) {
            Err(Error::NotMetzler { i: 0, j: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perron_diagonal() {
        let m = DenseMatrix::from_rows(&[vec![-2.0, 0.0], vec![0.0, -3.0]]).unwrap();
        let r = perron_rightmost(&m, 1e-12, 10_000).unwrap();
        assert!((r.eigenvalue + 2.0).abs() <= 1e-10);
        assert!(!r.strictly_positive, "limit concentrates on one component");
    }

    #[test]
    fn multiplicity_semisimple() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert_eq!(rank_multiplicity(&m, 0.0, 1e-7), (1, 1));
    }

    #[test]
    fn multiplicity_nilpotent_jordan_block() {
        let m = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(rank_multiplicity(&m, 0.0, 1e-7), (1, 2));
    }

    #[test]
    fn multiplicity_simple_eigenvalue() {
        let m = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 5.0]]).unwrap();
        assert_eq!(rank_multiplicity(&m, 2.0, 1e-7), (1, 1));
        assert_eq!(rank_multiplicity(&m, 3.0, 1e-7), (0, 0));
    }

    #[test]
    fn rank_threshold_cuts_small_pivots() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-9]]).unwrap();
        assert_eq!(rank_with_threshold(&m, 1e-7), 1);
        assert_eq!(rank_with_threshold(&m, 1e-12), 2);
    }
}
