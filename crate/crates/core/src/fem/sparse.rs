//! Compressed-row storage for the symmetric finite element operators.
//!
//! All operators assembled on one [`FemSpace`](super::FemSpace) share a
//! single [`Pattern`], so sums such as `S + M_V + Σ κ M_φφ` are plain
//! value-array sums.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric sparsity pattern in compressed row layout (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag: Vec<usize>,
}

impl Pattern {
    /// Builds the pattern coupling every pair of nodes that share an element.
    pub fn from_elements<'a>(n: usize, elements: impl Iterator<Item = &'a [usize]>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for nodes in elements {
            for &a in nodes {
                rows[a].extend_from_slice(nodes);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, row) in rows.iter_mut().enumerate() {
            if !row.contains(&i) {
                row.push(i);
            }
            row.sort_unstable();
            row.dedup();
            let start = col_idx.len();
            let d = row.binary_search(&i).expect("diagonal present");
            diag.push(start + d);
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            diag,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Position of the diagonal entry of each row in the value array.
    pub fn diag_idx(&self) -> &[usize] {
        &self.diag
    }

    /// Value-array position of entry `(i, j)`, if it is in the pattern.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }
}

/// Principal-submatrix extraction map used for Dirichlet elimination.
#[derive(Debug, Clone)]
pub struct Restriction {
    pattern: Arc<Pattern>,
    source: Vec<usize>,
}

impl Restriction {
    /// `keep` lists the retained rows/columns of `full` in increasing order.
    pub fn new(full: &Pattern, keep: &[usize]) -> Self {
        let mut reduced_of = vec![usize::MAX; full.n()];
        for (r, &i) in keep.iter().enumerate() {
            reduced_of[i] = r;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut col_idx = Vec::new();
        let mut diag = Vec::with_capacity(keep.len());
        let mut source = Vec::new();
        row_ptr.push(0);
        for (r, &i) in keep.iter().enumerate() {
            for k in full.row(i) {
                let c = reduced_of[full.col_idx()[k]];
                if c != usize::MAX {
                    if c == r {
                        diag.push(col_idx.len());
                    }
                    col_idx.push(c);
                    source.push(k);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let pattern = Pattern {
            n: keep.len(),
            row_ptr,
            col_idx,
            diag,
        };
        Self {
            pattern: Arc::new(pattern),
            source,
        }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn apply(&self, full: &SparseSymMatrix) -> SparseSymMatrix {
        let values = self.source.iter().map(|&k| full.values[k]).collect();
        SparseSymMatrix {
            pattern: Arc::clone(&self.pattern),
            values,
        }
    }
}

/// Assembled symmetric sparse operator.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_values(pattern: Arc<Pattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::Shape {
                what: "sparse values",
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        Ok(Self { pattern, values })
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.pattern.diag.iter().map(|&k| self.values[k]).collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n());
        debug_assert_eq!(y.len(), self.n());
        let p = &*self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let p = &*self.pattern;
        let mut total = 0.0;
        for (i, xi) in x.iter().enumerate() {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * y[p.col_idx[k]];
            }
            total += xi * acc;
        }
        total
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `self += alpha * other`; both must share the same pattern.
    pub fn add_scaled(&mut self, alpha: f64, other: &SparseSymMatrix) {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern,
            "sparse operands must share a pattern"
        );
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij − A_ji|` over the stored pattern.
    pub fn asymmetry(&self) -> f64 {
        let p = &*self.pattern;
        let mut worst: f64 = 0.0;
        for i in 0..p.n {
            for k in p.row(i) {
                let j = p.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = &*self.pattern;
        let mut dense = DMatrix::zeros(p.n, p.n);
        for i in 0..p.n {
            for k in p.row(i) {
                dense[(i, p.col_idx[k])] = self.values[k];
            }
        }
        dense
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Arc<Pattern> {
        let elems: Vec<[usize; 2]> = (0..n - 1).map(|i| [i, i + 1]).collect();
        Arc::new(Pattern::from_elements(n, elems.iter().map(|e| &e[..])))
    }

    #[test]
    fn pattern_of_a_chain_is_tridiagonal() {
        let p = chain(4);
        assert_eq!(p.nnz(), 10);
        assert_eq!(p.find(0, 1), Some(1));
        assert_eq!(p.find(0, 2), None);
        for i in 0..4 {
            assert_eq!(p.col_idx()[p.diag_idx()[i]], i);
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let p = chain(5);
        let values: Vec<f64> = (0..p.nnz()).map(|k| 1.0 + k as f64 * 0.25).collect();
        let a = SparseSymMatrix::from_values(p, values).unwrap();
        let x = [1.0, -2.0, 0.5, 3.0, -1.0];
        let y = a.mul_vec(&x);
        let yd = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        for i in 0..5 {
            assert!((y[i] - yd[i]).abs() < 1e-14);
        }
        assert!((a.bilinear(&x, &x) - a.quad_form(&x)).abs() < 1e-14);
    }

    #[test]
    fn restriction_extracts_principal_submatrix() {
        let p = chain(5);
        let values: Vec<f64> = (0..p.nnz()).map(|k| k as f64).collect();
        let a = SparseSymMatrix::from_values(p.clone(), values).unwrap();
        let r = Restriction::new(&p, &[1, 2, 3]);
        let sub = r.apply(&a);
        let dense = a.to_dense();
        let dsub = sub.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(dsub[(i, j)], dense[(i + 1, j + 1)]);
            }
        }
        assert_eq!(sub.pattern().diag_idx().len(), 3);
    }
}
