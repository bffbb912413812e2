//! Additive natural-cubic-spline learner: each continuous covariate gets a
//! natural spline basis with knots at training quantiles (binary covariates
//! get a plain linear term), and the expanded design is fit by least squares.

use crate::error::Result;
use crate::linalg::{solve_gram_ridged, Mat};

const RIDGE_REL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub(crate) enum ColBasis {
    /// Single linear term.
    Linear,
    /// Natural cubic spline with the given strictly increasing knots
    /// (linear extrapolation beyond the boundary knots).
    Natural { knots: Vec<f64> },
}

impl ColBasis {
    fn width(&self) -> usize {
        match self {
            ColBasis::Linear => 1,
            ColBasis::Natural { knots } => knots.len() - 1,
        }
    }

    fn emit(&self, x: f64, out: &mut Vec<f64>) {
        match self {
            ColBasis::Linear => out.push(x),
            ColBasis::Natural { knots } => {
                let k = knots.len();
                let last = knots[k - 1];
                let pen = knots[k - 2];
                let d_last = truncated_cubic(x, pen, last);
                out.push(x);
                for i in 0..k - 2 {
                    out.push(truncated_cubic(x, knots[i], last) - d_last);
                }
            }
        }
    }
}

// d_k(x) = [(x - ξ_k)_+^3 - (x - ξ_K)_+^3] / (ξ_K - ξ_k)
fn truncated_cubic(x: f64, knot: f64, last: f64) -> f64 {
    let a = (x - knot).max(0.0);
    let b = (x - last).max(0.0);
    (a * a * a - b * b * b) / (last - knot)
}

#[derive(Clone, Debug)]
pub(crate) struct SplineModel {
    cols: Vec<ColBasis>,
    coef: Vec<f64>, // intercept first, then per basis column
}

impl SplineModel {
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let mut basis = Vec::with_capacity(self.coef.len() - 1);
        for (b, &xi) in self.cols.iter().zip(x) {
            b.emit(xi, &mut basis);
        }
        let mut v = self.coef[0];
        for (c, b) in self.coef[1..].iter().zip(&basis) {
            v += c * b;
        }
        v
    }
}

pub(crate) fn fit(x: &Mat, y: &[f64], df: usize) -> Result<SplineModel> {
    let n = x.rows();
    let d = x.cols();
    let mut cols = Vec::with_capacity(d);
    for c in 0..d {
        let col = x.column(c);
        cols.push(basis_for_column(&col, df));
    }

    let width: usize = cols.iter().map(|b| b.width()).sum();
    let p = width + 1;
    let mut g = Mat::zeros(p, p);
    let mut ct = vec![0.0; p];
    let mut row_basis = Vec::with_capacity(width);
    for r in 0..n {
        row_basis.clear();
        for (b, &xi) in cols.iter().zip(x.row(r)) {
            b.emit(xi, &mut row_basis);
        }
        let yr = y[r];
        g[(0, 0)] += 1.0;
        ct[0] += yr;
        for i in 0..width {
            let bi = row_basis[i];
            g[(0, i + 1)] += bi;
            ct[i + 1] += bi * yr;
            for j in i..width {
                g[(i + 1, j + 1)] += bi * row_basis[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    let coef = solve_gram_ridged(&g, &ct, RIDGE_REL);
    Ok(SplineModel { cols, coef })
}

fn basis_for_column(col: &[f64], df: usize) -> ColBasis {
    let mut sorted = col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup_by(|a, b| a == b);
    if sorted.len() <= 2 {
        return ColBasis::Linear;
    }
    // df basis columns need df + 1 knots at evenly spaced quantiles
    let n_knots = df + 1;
    let mut knots = Vec::with_capacity(n_knots);
    for i in 0..n_knots {
        let q = quantile(&sorted, i as f64 / (n_knots - 1) as f64);
        if knots.last().is_none_or(|&last| q > last) {
            knots.push(q);
        }
    }
    if knots.len() < 3 {
        ColBasis::Linear
    } else {
        ColBasis::Natural { knots }
    }
}

// type-7 quantile over already sorted distinct values
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}
