//! Dense row-major matrix and a column-pivoted Householder least-squares solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares solution of a column-major `n x p` system.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    /// Columns found linearly dependent on the others; their coefficient is 0.
    pub dropped: Vec<usize>,
}

/// Minimizes `|A x - b|` by Householder QR with column pivoting.
///
/// `columns[j]` is column `j` of `A`; all columns must have `b.len()` rows.
/// A pivot whose remaining norm falls below `rel_tol` times the largest
/// column norm ends the factorization; the remaining columns get weight 0.
pub fn lstsq(columns: &[Vec<f64>], b: &[f64], rel_tol: f64) -> LstsqSolution {
    let n = b.len();
    let p = columns.len();
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut diag = vec![0.0; p];
    let steps = n.min(p);
    let scale = a.iter().map(|c| math::sqrt(dot(c, c))).fold(0.0, f64::max);
    let mut rank = 0;

    for k in 0..steps {
        // Pivot: largest remaining column norm.
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..p {
            let s: f64 = a[j][k..].iter().map(|v| v * v).sum();
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        let norm = math::sqrt(best_norm.max(0.0));
        if scale == 0.0 || norm <= rel_tol * scale {
            break;
        }
        a.swap(k, best);
        perm.swap(k, best);

        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = dot(&v, &v);
        diag[k] = alpha;
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k + 1) {
                let f = 2.0 * dot(&v, &col[k..]) / vnorm2;
                for (x, vi) in col[k..].iter_mut().zip(&v) {
                    *x -= f * vi;
                }
            }
            let f = 2.0 * dot(&v, &rhs[k..]) / vnorm2;
            for (x, vi) in rhs[k..].iter_mut().zip(&v) {
                *x -= f * vi;
            }
        }
        rank = k + 1;
    }

    // Back substitution on the leading rank x rank block.
    let mut z = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = rhs[i];
        for j in i + 1..rank {
            s -= a[j][i] * z[j];
        }
        z[i] = s / diag[i];
    }
    let mut coefficients = vec![0.0; p];
    for (i, zi) in z.iter().enumerate() {
        coefficients[perm[i]] = *zi;
    }
    let mut dropped: Vec<usize> = perm[rank..].to_vec();
    dropped.sort_unstable();
    LstsqSolution { coefficients, rank, dropped }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_system() {
        // x0 + 2 x1 = b with an exact solution (1, -1).
        let cols = vec![vec![1.0, 0.0, 1.0, 2.0], vec![2.0, 1.0, 0.0, 1.0]];
        let b: Vec<f64> = (0..4).map(|i| cols[0][i] - cols[1][i]).collect();
        let s = lstsq(&cols, &b, 1e-12);
        assert_eq!(s.rank, 2);
        assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((s.coefficients[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_column_is_dropped() {
        let c = vec![1.0, 2.0, 3.0, 4.0];
        let cols = vec![c.clone(), c.clone(), vec![1.0, -1.0, 1.0, -1.0]];
        let b = vec![2.0, 4.0, 6.0, 8.0];
        let s = lstsq(&cols, &b, 1e-10);
        assert_eq!(s.rank, 2);
        assert_eq!(s.dropped.len(), 1);
        let fit: Vec<f64> = (0..4).map(|i| cols.iter().zip(&s.coefficients).map(|(c, w)| c[i] * w).sum()).collect();
        for (f, y) in fit.iter().zip(&b) {
            assert!((f - y).abs() < 1e-10);
        }
    }
}
