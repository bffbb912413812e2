//! Outer cross-validated association estimation and its inference: the
//! composite nonparametric R², influence-function variance of the log MSE
//! ratio, Wald-style confidence intervals, and the one-sided test of no
//! association.

use serde::Serialize;

use crate::data::{standardize_outcomes, Dataset, Standardization};
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::pipeline::{self, FoldLayout, PipelineConfig, PipelineOutput};
use crate::stats::{normal_cdf, normal_quantile};
use crate::superlearner::FitCounts;
use crate::weights::{OmegaOptions, WeightSearchResult};

/// Configuration of the three cross-validation layers and the inference.
#[derive(Clone, Debug)]
pub struct AssocConfig {
    pub k_outer: usize,
    pub k_weight: usize,
    pub k_inner: usize,
    /// Tie the layers into the fold lattice and share fits (K° = K−1,
    /// K* = K−2). Cuts candidate fits to (K³+5K)/6 per learner.
    pub reuse: bool,
    /// Lattice fold structure without the fit cache. Only used to verify
    /// that sharing leaves estimates unchanged.
    pub lattice_uncached: bool,
    pub seed: u64,
    pub alpha: f64,
    pub omega: OmegaOptions,
}

impl Default for AssocConfig {
    fn default() -> Self {
        AssocConfig {
            k_outer: 10,
            k_weight: 10,
            k_inner: 10,
            reuse: false,
            lattice_uncached: false,
            seed: 0,
            alpha: 0.05,
            omega: OmegaOptions::default(),
        }
    }
}

impl AssocConfig {
    pub(crate) fn pipeline(&self) -> PipelineConfig {
        let lattice = self.reuse || self.lattice_uncached;
        PipelineConfig {
            k_outer: self.k_outer,
            k_weight: self.k_weight,
            k_inner: self.k_inner,
            layout: if lattice { FoldLayout::Lattice } else { FoldLayout::Nested },
            share_fits: self.reuse,
            seed: self.seed,
            omega: self.omega.clone(),
        }
    }
}

/// One outer fold's contribution to the estimate.
#[derive(Clone, Debug, Serialize)]
pub struct FoldEstimate {
    pub fold: usize,
    pub n_validation: usize,
    pub mse_model: f64,
    pub mse_null: f64,
    /// Outcome weights fitted on this fold's training sample.
    pub omega: Vec<f64>,
    /// Weight-layer objective at those weights (training diagnostic).
    pub omega_r2: f64,
}

/// The cross-validated association estimate with its inference.
#[derive(Clone, Debug, Serialize)]
pub struct AssociationEstimate {
    pub mse_model: f64,
    pub mse_null: f64,
    /// 1 − exp(log_ratio): the cross-validated nonparametric R².
    pub r2: f64,
    /// log(mse_model / mse_null).
    pub log_ratio: f64,
    /// Influence-function variance of the log ratio (per √n scale).
    pub sigma2: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// One-sided p-value for the null of no association.
    pub p_value: f64,
    pub alpha: f64,
    pub n: usize,
    pub per_fold: Vec<FoldEstimate>,
    pub fit_counts: FitCounts,
    /// Outcome standardization applied before the run.
    pub standardization: Vec<Standardization>,
    #[serde(skip)]
    pub curves: InfluenceCurves,
}

/// Per-observation influence contributions, by outer fold.
#[derive(Clone, Debug, Default)]
pub struct InfluenceCurves {
    /// (validation index, model influence, null influence) per fold.
    pub per_fold: Vec<FoldCurves>,
    /// Delta-method gradient (1/mse_model, −1/mse_null).
    pub gradient: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct FoldCurves {
    pub fold: usize,
    pub val_idx: Vec<usize>,
    pub d_model: Vec<f64>,
    pub d_null: Vec<f64>,
}

/// Estimate the association between the covariates and the multivariate
/// outcome by the full three-layer procedure, with inference attached.
pub fn estimate_association(
    specs: &[LearnerSpec],
    data: &Dataset,
    cfg: &AssocConfig,
) -> Result<AssociationEstimate> {
    Ok(estimate_association_detailed(specs, data, cfg)?.0)
}

/// As [`estimate_association`], also returning the raw pipeline output
/// (importance contrasts need the per-fold pieces of both runs).
pub fn estimate_association_detailed(
    specs: &[LearnerSpec],
    data: &Dataset,
    cfg: &AssocConfig,
) -> Result<(AssociationEstimate, PipelineOutput)> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0,1), got {}", cfg.alpha)));
    }
    let standardized;
    let working = if data.standardization().is_some() {
        data
    } else {
        standardized = standardize_outcomes(data)?;
        &standardized
    };
    let output = pipeline::run_outer_cv(specs, working, &cfg.pipeline())?;
    let estimate = inference_from_output(&output, working, cfg)?;
    Ok((estimate, output))
}

fn inference_from_output(
    output: &PipelineOutput,
    data: &Dataset,
    cfg: &AssocConfig,
) -> Result<AssociationEstimate> {
    let k = output.folds.len() as f64;
    let mse_model = output.folds.iter().map(|f| f.mse_model).sum::<f64>() / k;
    let mse_null = output.folds.iter().map(|f| f.mse_null).sum::<f64>() / k;
    if mse_null <= 1e-12 {
        return Err(Error::DegenerateNull { mse_null });
    }
    let log_ratio = (mse_model / mse_null).ln();
    let r2 = 1.0 - log_ratio.exp();

    let curves = influence_curves(output, mse_model, mse_null);
    let sigma2 = influence_variance(&curves);
    let n = output.n;
    let (ci_lower, ci_upper) = wald_interval(log_ratio, sigma2, n, cfg.alpha);
    let p_value = null_test_p_value(log_ratio, sigma2, n);

    let per_fold = output
        .folds
        .iter()
        .map(|f| FoldEstimate {
            fold: f.fold,
            n_validation: f.val_idx.len(),
            mse_model: f.mse_model,
            mse_null: f.mse_null,
            omega: f.omega.as_slice().to_vec(),
            omega_r2: f.omega_r2,
        })
        .collect();

    Ok(AssociationEstimate {
        mse_model,
        mse_null,
        r2,
        log_ratio,
        sigma2,
        ci_lower,
        ci_upper,
        p_value,
        alpha: cfg.alpha,
        n,
        per_fold,
        fit_counts: output.fit_counts,
        standardization: data.standardization().map(<[_]>::to_vec).unwrap_or_default(),
        curves,
    })
}

/// Per-observation influence contributions: squared errors centered at their
/// fold MSE, with the delta-method gradient for the log ratio.
pub fn influence_curves(
    output: &PipelineOutput,
    mse_model: f64,
    mse_null: f64,
) -> InfluenceCurves {
    let per_fold = output
        .folds
        .iter()
        .map(|f| FoldCurves {
            fold: f.fold,
            val_idx: f.val_idx.clone(),
            d_model: f.sq_err_model.iter().map(|e| e - f.mse_model).collect(),
            d_null: f.sq_err_null.iter().map(|e| e - f.mse_null).collect(),
        })
        .collect();
    InfluenceCurves { per_fold, gradient: [1.0 / mse_model, -1.0 / mse_null] }
}

/// σ² = gᵀ { (1/K) Σ_k (1/|V_k|) Σ_i I_i I_iᵀ } g over the fold curves.
pub fn influence_variance(curves: &InfluenceCurves) -> f64 {
    let k = curves.per_fold.len() as f64;
    let mut mm = 0.0;
    let mut mn = 0.0;
    let mut nn = 0.0;
    for fold in &curves.per_fold {
        let nv = fold.d_model.len() as f64;
        let mut smm = 0.0;
        let mut smn = 0.0;
        let mut snn = 0.0;
        for (dm, dn) in fold.d_model.iter().zip(&fold.d_null) {
            smm += dm * dm;
            smn += dm * dn;
            snn += dn * dn;
        }
        mm += smm / nv;
        mn += smn / nv;
        nn += snn / nv;
    }
    mm /= k;
    mn /= k;
    nn /= k;
    let [gm, gn] = curves.gradient;
    (gm * gm * mm + 2.0 * gm * gn * mn + gn * gn * nn).max(0.0)
}

fn wald_interval(log_ratio: f64, sigma2: f64, n: usize, alpha: f64) -> (f64, f64) {
    let z = normal_quantile(1.0 - alpha / 2.0);
    let half = z * (sigma2 / n as f64).sqrt();
    // 1 − exp is decreasing: the upper log endpoint gives the lower R² bound
    let lo = 1.0 - (log_ratio + half).exp();
    let hi = 1.0 - (log_ratio - half).exp();
    if lo <= hi {
        (lo, hi)
    } else {
        (hi, lo)
    }
}

fn null_test_p_value(log_ratio: f64, sigma2: f64, n: usize) -> f64 {
    let se = (sigma2 / n as f64).sqrt();
    if se == 0.0 {
        // degenerate: the statistic is ±∞ unless the ratio is exactly 1
        return if log_ratio < 0.0 {
            0.0
        } else if log_ratio > 0.0 {
            1.0
        } else {
            0.5
        };
    }
    normal_cdf(log_ratio / se)
}

/// Wald-style confidence interval for the R² at a chosen level.
pub fn wald_ci(est: &AssociationEstimate, alpha: f64) -> (f64, f64) {
    wald_interval(est.log_ratio, est.sigma2, est.n, alpha)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TestDecision {
    pub reject: bool,
    pub p_value: f64,
    pub alpha: f64,
}

/// Level-α one-sided test of no association: reject when the standardized
/// log ratio falls below the α normal quantile.
pub fn test_null(est: &AssociationEstimate, alpha: f64) -> TestDecision {
    let p = null_test_p_value(est.log_ratio, est.sigma2, est.n);
    TestDecision { reject: p < alpha, p_value: p, alpha }
}

/// The full-data outcome-weight fit reported alongside the estimate.
pub fn fit_outcome_weights(
    specs: &[LearnerSpec],
    data: &Dataset,
    cfg: &AssocConfig,
) -> Result<WeightSearchResult> {
    let standardized;
    let working = if data.standardization().is_some() {
        data
    } else {
        standardized = standardize_outcomes(data)?;
        &standardized
    };
    pipeline::full_data_weights(specs, working, &cfg.pipeline())
}
