//! Comparator tests: the four canonical-correlation statistics with
//! permutation p-values, and the first-principal-component regression F-test.
//!
//! The canonical eigenproblem is solved through orthonormal bases of the
//! centered column spaces: the singular values of QxᵀQy are the canonical
//! correlations, and λᵢ = ρᵢ²/(1−ρᵢ²) are the eigenvalues of H E⁻¹ without
//! ever forming E⁻¹.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, sym_eigen, Mat};
use crate::rng;
use crate::stats::f_survival;

const RANK_TOL: f64 = 1e-10;
const PERFECT_CORR_TOL: f64 = 1e-10;

/// The four classical multivariate association statistics, all functions of
/// the canonical eigenvalues λ₁ ≥ … ≥ λ_r ≥ 0.
#[derive(Clone, Debug, Serialize)]
pub struct CcaStatistics {
    pub eigenvalues: Vec<f64>,
    /// Π 1/(1+λᵢ) ∈ (0, 1]; small values are extreme.
    pub wilks: f64,
    /// Σ λᵢ ≥ 0.
    pub hotelling_lawley: f64,
    /// Σ λᵢ/(1+λᵢ) ∈ [0, r].
    pub pillai_bartlett: f64,
    /// λ₁.
    pub roy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CcaStatKind {
    Wilks,
    HotellingLawley,
    PillaiBartlett,
    Roy,
}

impl CcaStatKind {
    pub const ALL: [CcaStatKind; 4] = [
        CcaStatKind::Wilks,
        CcaStatKind::HotellingLawley,
        CcaStatKind::PillaiBartlett,
        CcaStatKind::Roy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CcaStatKind::Wilks => "wilks",
            CcaStatKind::HotellingLawley => "hotelling-lawley",
            CcaStatKind::PillaiBartlett => "pillai-bartlett",
            CcaStatKind::Roy => "roy",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "wilks" => CcaStatKind::Wilks,
            "hotelling-lawley" => CcaStatKind::HotellingLawley,
            "pillai-bartlett" => CcaStatKind::PillaiBartlett,
            "roy" => CcaStatKind::Roy,
            _ => return None,
        })
    }

    pub fn extract(&self, stats: &CcaStatistics) -> f64 {
        match self {
            CcaStatKind::Wilks => stats.wilks,
            CcaStatKind::HotellingLawley => stats.hotelling_lawley,
            CcaStatKind::PillaiBartlett => stats.pillai_bartlett,
            CcaStatKind::Roy => stats.roy,
        }
    }

    /// Which tail counts as evidence against independence.
    pub fn extreme_tail(&self) -> Tail {
        match self {
            CcaStatKind::Wilks => Tail::Lower,
            _ => Tail::Upper,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    Lower,
    Upper,
}

/// Canonical-correlation statistics for the multivariate regression of Y on X.
pub fn cca_statistics(x: &Mat, y: &Mat) -> Result<CcaStatistics> {
    let bases = cca_bases(x, y)?;
    let m = bases.qx.transpose().matmul(&bases.qy);
    stats_from_cross(&m)
}

struct CcaBases {
    qx: Mat,
    qy: Mat,
}

fn cca_bases(x: &Mat, y: &Mat) -> Result<CcaBases> {
    let n = x.rows();
    if y.rows() != n {
        return Err(Error::Config("X and Y row counts differ".into()));
    }
    if n <= x.cols() + y.cols() {
        return Err(Error::TooFewObservations {
            detail: format!("need n > D + J, got n = {n}, D = {}, J = {}", x.cols(), y.cols()),
        });
    }
    let (xc, _) = x.centered();
    let (yc, _) = y.centered();
    let qx = orthonormal_basis(&xc, RANK_TOL);
    let qy = orthonormal_basis(&yc, RANK_TOL);
    if qx.q.cols() == 0 || qy.q.cols() == 0 {
        return Err(Error::SingularMatrix("a data matrix has no variation".into()));
    }
    Ok(CcaBases { qx: qx.q, qy: qy.q })
}

fn stats_from_cross(m: &Mat) -> Result<CcaStatistics> {
    // eigenvalues of MᵀM (or MMᵀ, whichever is smaller) are the squared
    // canonical correlations
    let (rows, cols) = (m.rows(), m.cols());
    let small = if cols <= rows { m.transpose().matmul(m) } else { m.matmul(&m.transpose()) };
    let (eigs, _) = sym_eigen(&small);
    let r = rows.min(cols);
    let mut eigenvalues = Vec::with_capacity(r);
    let mut wilks = 1.0;
    let mut hotelling = 0.0;
    let mut pillai = 0.0;
    for &rho2_raw in eigs.iter().take(r) {
        let rho2 = rho2_raw.clamp(0.0, 1.0);
        if rho2 >= 1.0 - PERFECT_CORR_TOL {
            return Err(Error::SingularMatrix(
                "perfect canonical correlation: the error cross-product matrix is singular"
                    .into(),
            ));
        }
        let lambda = rho2 / (1.0 - rho2);
        eigenvalues.push(lambda);
        wilks *= 1.0 / (1.0 + lambda);
        hotelling += lambda;
        pillai += lambda / (1.0 + lambda);
    }
    let roy = eigenvalues.first().copied().unwrap_or(0.0);
    Ok(CcaStatistics { eigenvalues, wilks, hotelling_lawley: hotelling, pillai_bartlett: pillai, roy })
}

#[derive(Clone, Debug, Serialize)]
pub struct PermutationResult {
    pub statistic: CcaStatKind,
    pub observed: f64,
    pub b: usize,
    /// (1 + #{permutations at least as extreme}) / (B + 1).
    pub p_value: f64,
    pub direction: Tail,
    /// Draws discarded for singularity and redrawn.
    pub discarded: usize,
}

/// Permutation test of one canonical-correlation statistic: rows of X are
/// permuted against Y, the statistic recomputed B times.
pub fn permutation_test(
    x: &Mat,
    y: &Mat,
    statistic: CcaStatKind,
    b: usize,
    seed: u64,
) -> Result<PermutationResult> {
    let all = permutation_test_all(x, y, b, seed)?;
    Ok(all.into_iter().find(|r| r.statistic == statistic).expect("all four statistics present"))
}

/// One shared set of permutation draws scoring all four statistics at once.
pub fn permutation_test_all(
    x: &Mat,
    y: &Mat,
    b: usize,
    seed: u64,
) -> Result<Vec<PermutationResult>> {
    if b < 19 {
        return Err(Error::Config(format!("need at least 19 permutations, got {b}")));
    }
    let bases = cca_bases(x, y)?;
    let observed = stats_from_cross(&bases.qx.transpose().matmul(&bases.qy))?;

    let n = x.rows();
    let max_discard = b / 10;
    // permuting rows of X then re-centering and re-orthonormalizing equals
    // permuting the rows of Qx, so each draw is one small matrix product
    let draws: Vec<Result<(Option<CcaStatistics>, usize)>> = (0..b as u64)
        .into_par_iter()
        .map(|draw| {
            let mut discarded = 0usize;
            let mut attempt = 0u64;
            loop {
                let mut order: Vec<usize> = (0..n).collect();
                let mut prng = rng::seeded(rng::derive(seed, &[0x7065, draw, attempt]));
                rng::shuffle(&mut order, &mut prng);
                let qx_perm = bases.qx.gather_rows(&order);
                let m = qx_perm.transpose().matmul(&bases.qy);
                match stats_from_cross(&m) {
                    Ok(s) => return Ok((Some(s), discarded)),
                    Err(Error::SingularMatrix(_)) => {
                        discarded += 1;
                        attempt += 1;
                        if discarded > max_discard {
                            return Ok((None, discarded));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();

    let mut permuted: Vec<CcaStatistics> = Vec::with_capacity(b);
    let mut total_discarded = 0usize;
    for d in draws {
        let (stats, discarded) = d?;
        total_discarded += discarded;
        match stats {
            Some(s) => permuted.push(s),
            None => {
                return Err(Error::SingularMatrix(format!(
                    "more than {max_discard} singular permutation draws"
                )))
            }
        }
    }

    Ok(CcaStatKind::ALL
        .iter()
        .map(|&kind| {
            let obs = kind.extract(&observed);
            let tail = kind.extreme_tail();
            let extreme = permuted
                .iter()
                .filter(|s| {
                    let v = kind.extract(s);
                    match tail {
                        Tail::Lower => v <= obs,
                        Tail::Upper => v >= obs,
                    }
                })
                .count();
            PermutationResult {
                statistic: kind,
                observed: obs,
                b,
                p_value: (1 + extreme) as f64 / (b + 1) as f64,
                direction: tail,
                discarded: total_discarded,
            }
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct PcaFTest {
    pub f_statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    /// First principal component loadings of the standardized outcomes
    /// (largest-magnitude entry made positive).
    pub loading: Vec<f64>,
}

/// Regress the first principal component of the standardized outcomes on
/// all covariates and report the overall regression F-test.
pub fn pca_f_test(x: &Mat, y: &Mat, alpha: f64) -> Result<PcaFTest> {
    let n = x.rows();
    let d = x.cols();
    if n <= d + 1 {
        return Err(Error::TooFewObservations {
            detail: format!("need n > D + 1, got n = {n}, D = {d}"),
        });
    }
    let (yc, _) = y.centered();
    let j = y.cols();
    // correlation-scale PCA: standardize columns to unit variance
    let mut ystd = yc.clone();
    for c in 0..j {
        let col = yc.column(c);
        let var = col.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
        if var <= 0.0 {
            return Err(Error::ConstantOutcome { name: format!("column {c}") });
        }
        let sd = var.sqrt();
        for r in 0..n {
            ystd[(r, c)] /= sd;
        }
    }
    let corr = {
        let mut g = ystd.gram();
        for a in 0..j {
            for bb in 0..j {
                g[(a, bb)] /= (n - 1) as f64;
            }
        }
        g
    };
    let (_, vectors) = sym_eigen(&corr);
    let mut loading = vectors.column(0);
    // sign convention: the largest-magnitude loading is positive
    let dominant = loading
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if loading[dominant] < 0.0 {
        loading.iter_mut().for_each(|v| *v = -*v);
    }
    let scores = ystd.mul_vec(&loading);

    // overall F-test of the regression of scores on [1, X]
    let mut design = Mat::zeros(n, d + 1);
    for r in 0..n {
        design[(r, 0)] = 1.0;
        design.row_mut(r)[1..].copy_from_slice(x.row(r));
    }
    let g = design.gram();
    let c = design.tx_vec(&scores);
    let ch = crate::linalg::cholesky(&g)
        .ok_or_else(|| Error::SingularMatrix("rank-deficient covariate design".into()))?;
    let coef = ch.solve(&c);
    let fitted = design.mul_vec(&coef);
    let mean = crate::stats::mean(&scores);
    let mut rss = 0.0;
    let mut tss = 0.0;
    for (s, f) in scores.iter().zip(&fitted) {
        rss += (s - f) * (s - f);
        tss += (s - mean) * (s - mean);
    }
    let df1 = d as f64;
    let df2 = (n - d - 1) as f64;
    let f_statistic = ((tss - rss).max(0.0) / df1) / (rss / df2);
    let p_value = f_survival(df1, df2, f_statistic);
    Ok(PcaFTest { f_statistic, p_value, reject: p_value < alpha, alpha, loading })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_mat(n: usize, cols: usize, seed: u64, scale: f64) -> Mat {
        let mut prng = rng::seeded(seed);
        let mut m = Mat::zeros(n, cols);
        for r in 0..n {
            for c in 0..cols {
                m[(r, c)] = scale * rng::std_normal(&mut prng);
            }
        }
        m
    }

    #[test]
    fn univariate_eigenvalue_matches_pearson_identity() {
        // hand-computable 4-point instance
        let x = Mat::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let y = Mat::from_vec(4, 1, vec![1.2, 1.9, 3.4, 3.8]);
        // Pearson correlation by hand
        let mx = 2.5;
        let my = (1.2 + 1.9 + 3.4 + 3.8) / 4.0;
        let xs: Vec<f64> = x.column(0).iter().map(|v| v - mx).collect();
        let ys: Vec<f64> = y.column(0).iter().map(|v| v - my).collect();
        let num: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let den = (xs.iter().map(|v| v * v).sum::<f64>()
            * ys.iter().map(|v| v * v).sum::<f64>())
        .sqrt();
        let rho = num / den;
        let expected = rho * rho / (1.0 - rho * rho);

        let stats = cca_statistics(&x, &y).unwrap();
        assert!((stats.eigenvalues[0] - expected).abs() < 1e-10);
        assert!((stats.roy - expected).abs() < 1e-10);
        assert!((stats.wilks - 1.0 / (1.0 + expected)).abs() < 1e-12);
        assert!((stats.hotelling_lawley - expected).abs() < 1e-10);
        assert!((stats.pillai_bartlett - rho * rho).abs() < 1e-10);
    }

    #[test]
    fn independent_data_has_near_zero_eigenvalues() {
        let x = gaussian_mat(2000, 2, 1, 1.0);
        let y = gaussian_mat(2000, 2, 2, 1.0);
        let stats = cca_statistics(&x, &y).unwrap();
        assert!(stats.eigenvalues.iter().all(|&l| l < 0.02), "{:?}", stats.eigenvalues);
        assert!(stats.wilks > 0.96, "wilks = {}", stats.wilks);
    }

    #[test]
    fn perfect_collinearity_is_singular() {
        let x = Mat::from_vec(6, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.clone();
        let err = cca_statistics(&x, &y).unwrap_err();
        assert!(matches!(err, Error::SingularMatrix(_)));
    }

    #[test]
    fn statistics_are_affine_invariant() {
        let x = gaussian_mat(300, 3, 5, 1.0);
        let y = {
            // give Y some dependence on X so the eigenvalues are not trivial
            let noise = gaussian_mat(300, 2, 6, 1.0);
            let mut y = Mat::zeros(300, 2);
            for r in 0..300 {
                y[(r, 0)] = x[(r, 0)] + 0.6 * noise[(r, 0)];
                y[(r, 1)] = -x[(r, 1)] + x[(r, 2)] + noise[(r, 1)];
            }
            y
        };
        let base = cca_statistics(&x, &y).unwrap();

        // invertible affine recodings of both sides
        let mut x2 = Mat::zeros(300, 3);
        let mut y2 = Mat::zeros(300, 2);
        for r in 0..300 {
            x2[(r, 0)] = 3.0 * x[(r, 0)] - 1.0;
            x2[(r, 1)] = x[(r, 0)] + 0.5 * x[(r, 1)] + 7.0;
            x2[(r, 2)] = -x[(r, 2)] + 2.0;
            y2[(r, 0)] = 2.0 * y[(r, 0)] + y[(r, 1)] + 4.0;
            y2[(r, 1)] = -0.5 * y[(r, 1)] + 1.0;
        }
        let recoded = cca_statistics(&x2, &y2).unwrap();
        assert!((base.wilks - recoded.wilks).abs() < 1e-8);
        assert!((base.hotelling_lawley - recoded.hotelling_lawley).abs() < 1e-7);
        assert!((base.pillai_bartlett - recoded.pillai_bartlett).abs() < 1e-8);
        assert!((base.roy - recoded.roy).abs() < 1e-7);
    }

    #[test]
    fn permutation_p_value_extremes() {
        // strong signal: observed more extreme than every permutation
        let n = 120;
        let x = gaussian_mat(n, 1, 9, 1.0);
        let mut y = Mat::zeros(n, 1);
        let noise = gaussian_mat(n, 1, 10, 0.2);
        for r in 0..n {
            y[(r, 0)] = x[(r, 0)] + noise[(r, 0)];
        }
        let b = 99;
        for kind in CcaStatKind::ALL {
            let res = permutation_test(&x, &y, kind, b, 3).unwrap();
            assert!(
                (res.p_value - 1.0 / (b + 1) as f64).abs() < 1e-12,
                "{kind:?}: p = {}",
                res.p_value
            );
        }
    }

    #[test]
    fn permutation_rejects_too_few_draws() {
        let x = gaussian_mat(30, 1, 1, 1.0);
        let y = gaussian_mat(30, 1, 2, 1.0);
        assert!(permutation_test(&x, &y, CcaStatKind::Wilks, 10, 0).is_err());
    }

    #[test]
    fn pca_test_finds_dominant_component_and_sign() {
        // outcome 0 has much larger variance: PC1 should align with it
        let n = 2000;
        let mut y = gaussian_mat(n, 3, 21, 1.0);
        for r in 0..n {
            y[(r, 0)] *= 5.0;
        }
        let x = gaussian_mat(n, 2, 22, 1.0);
        // PCA here is correlation-scale, so equalize variances except a tilt
        // toward a shared factor on column 0 and 1
        let mut y2 = Mat::zeros(n, 3);
        let shared = gaussian_mat(n, 1, 23, 1.0);
        for r in 0..n {
            y2[(r, 0)] = shared[(r, 0)] + 0.4 * y[(r, 1)];
            y2[(r, 1)] = shared[(r, 0)] + 0.4 * y[(r, 2)];
            y2[(r, 2)] = gaussian_mat(1, 1, 24 + r as u64, 1.0)[(0, 0)];
        }
        let res = pca_f_test(&x, &y2, 0.05).unwrap();
        // loadings concentrate on the two shared-factor outcomes
        assert!(res.loading[0].abs() > 0.5 && res.loading[1].abs() > 0.5);
        // sign convention: dominant entry positive
        let dominant = res
            .loading
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        assert!(dominant > 0.0);
        assert!((0.0..=1.0).contains(&res.p_value));
    }

    #[test]
    fn pca_test_rejects_rank_deficient_x() {
        let n = 50;
        let base = gaussian_mat(n, 1, 31, 1.0);
        let mut x = Mat::zeros(n, 2);
        for r in 0..n {
            x[(r, 0)] = base[(r, 0)];
            x[(r, 1)] = 2.0 * base[(r, 0)]; // exact collinearity
        }
        let y = gaussian_mat(n, 2, 32, 1.0);
        let err = pca_f_test(&x, &y, 0.05).unwrap_err();
        assert!(matches!(err, Error::SingularMatrix(_)));
    }

    #[test]
    fn permutation_draws_are_seed_deterministic() {
        let x = gaussian_mat(60, 2, 41, 1.0);
        let y = gaussian_mat(60, 2, 42, 1.0);
        let a = permutation_test(&x, &y, CcaStatKind::Wilks, 49, 7).unwrap();
        let b = permutation_test(&x, &y, CcaStatKind::Wilks, 49, 7).unwrap();
        assert_eq!(a.p_value.to_bits(), b.p_value.to_bits());
    }
}
