//! Small dense linear algebra: row-major matrices, Cholesky solves,
//! Gram-Schmidt orthonormal bases, and a cyclic Jacobi symmetric
//! eigendecomposition. Everything here is deterministic and sized for the
//! low-dimensional problems this crate works with (tens of columns).

use std::ops::{Index, IndexMut};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// New matrix from the given row indices in the given order.
    pub fn gather_rows(&self, idx: &[usize]) -> Mat {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Mat { rows: idx.len(), cols: self.cols, data }
    }

    /// New matrix from the given column indices in the given order.
    pub fn gather_cols(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            for (jo, &ji) in idx.iter().enumerate() {
                out[(r, jo)] = self[(r, ji)];
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for j in 0..b_row.len() {
                    out_row[j] += aik * b_row[j];
                }
            }
        }
        out
    }

    /// `XᵀX`, accumulated in the upper triangle and mirrored.
    pub fn gram(&self) -> Mat {
        let p = self.cols;
        let mut g = Mat::zeros(p, p);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..p {
                let xi = row[i];
                if xi == 0.0 {
                    continue;
                }
                for j in i..p {
                    g[(i, j)] += xi * row[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        g
    }

    /// `Xᵀy`.
    pub fn tx_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let yr = y[r];
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x * yr;
            }
        }
        out
    }

    /// `Xb`.
    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), b)).collect()
    }

    pub fn col_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, &x) in m.iter_mut().zip(self.row(r)) {
                *s += x;
            }
        }
        let n = self.rows as f64;
        m.iter_mut().for_each(|s| *s /= n);
        m
    }

    /// Column-centered copy together with the subtracted means.
    pub fn centered(&self) -> (Mat, Vec<f64>) {
        let means = self.col_means();
        let mut out = self.clone();
        for r in 0..out.rows {
            for (x, &m) in out.row_mut(r).iter_mut().zip(&means) {
                *x -= m;
            }
        }
        (out, means)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub struct Cholesky {
    l: Mat,
}

/// Factor `A = LLᵀ`. Returns `None` when a pivot is not strictly positive.
pub fn cholesky(a: &Mat) -> Option<Cholesky> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Some(Cholesky { l })
}

impl Cholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(b.len(), n);
        // forward: Lz = b
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        // backward: Lᵀx = z
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn factor(&self) -> &Mat {
        &self.l
    }
}

/// Solve the normal equations `G b = c` for a least-squares Gram matrix,
/// falling back to a small relative ridge on the diagonal when `G` is not
/// positive definite (degenerate designs inside a fold must not abort).
pub fn solve_gram_ridged(g: &Mat, c: &[f64], ridge_rel: f64) -> Vec<f64> {
    if let Some(ch) = cholesky(g) {
        return ch.solve(c);
    }
    let n = g.rows();
    let mean_diag = (0..n).map(|i| g[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let mut ridge = ridge_rel * mean_diag.max(1.0);
    let mut gr = g.clone();
    loop {
        for i in 0..n {
            gr[(i, i)] = g[(i, i)] + ridge;
        }
        if let Some(ch) = cholesky(&gr) {
            return ch.solve(c);
        }
        ridge *= 100.0;
    }
}

/// Orthonormal basis of the column space, via modified Gram-Schmidt with
/// one reorthogonalization pass. Columns whose residual norm falls below
/// `tol` times their original norm are treated as linearly dependent and
/// dropped; `kept` records the surviving source columns.
pub struct OrthoBasis {
    pub q: Mat,
    pub kept: Vec<usize>,
}

pub fn orthonormal_basis(x: &Mat, tol: f64) -> OrthoBasis {
    let n = x.rows();
    let mut q_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..x.cols() {
        let mut v = x.column(j);
        let orig = norm2(&v);
        if orig == 0.0 {
            continue;
        }
        for _pass in 0..2 {
            for q in &q_cols {
                let proj = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let res = norm2(&v);
        if res <= tol * orig {
            continue;
        }
        v.iter_mut().for_each(|vi| *vi /= res);
        q_cols.push(v);
        kept.push(j);
    }
    let r = q_cols.len();
    let mut q = Mat::zeros(n, r);
    for (c, col) in q_cols.iter().enumerate() {
        for (row, &val) in col.iter().enumerate() {
            q[(row, c)] = val;
        }
    }
    OrthoBasis { q, kept }
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns eigenvalues in descending order with matching eigenvector columns.
pub fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let max_sweeps = 64;
    for _sweep in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frob(&m)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = v.gather_cols(&order);
    (values, vectors)
}

fn frob(m: &Mat) -> f64 {
    m.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}
