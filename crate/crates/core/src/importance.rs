//! Group variable importance: the drop in cross-validated composite R² when
//! a covariate group is withheld, with influence-function inference that
//! accounts for the correlation between the full and reduced runs (they
//! share every observation and fold).

use serde::Serialize;

use crate::association::{estimate_association_detailed, AssocConfig, AssociationEstimate};
use crate::data::{standardize_outcomes, Dataset};
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::stats::{normal_cdf, normal_quantile};

#[derive(Clone, Debug)]
pub struct ImportanceConfig {
    pub assoc: AssocConfig,
    /// Estimate the joint 4×4 influence covariance of the two runs' MSE
    /// pairs (recommended). When false, the runs are treated as independent.
    pub covariance_aware: bool,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig { assoc: AssocConfig::default(), covariance_aware: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ImportanceEstimate {
    /// Covariate indices whose joint importance is measured.
    pub group: Vec<usize>,
    pub group_names: Vec<String>,
    /// full.r2 − reduced.r2.
    pub delta: f64,
    pub sigma2_delta: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Two-sided p-value for Δ = 0.
    pub p_value: f64,
    pub alpha: f64,
    pub full: AssociationEstimate,
    pub reduced: AssociationEstimate,
}

/// Joint importance of one covariate group.
pub fn estimate_importance(
    specs: &[LearnerSpec],
    data: &Dataset,
    group: &[usize],
    cfg: &ImportanceConfig,
) -> Result<ImportanceEstimate> {
    let mut results = estimate_importance_many(specs, data, &[group.to_vec()], cfg)?;
    Ok(results.remove(0))
}

/// Joint importance of several covariate groups, sharing a single full-model
/// run (and its fold assignments) across all contrasts.
pub fn estimate_importance_many(
    specs: &[LearnerSpec],
    data: &Dataset,
    groups: &[Vec<usize>],
    cfg: &ImportanceConfig,
) -> Result<Vec<ImportanceEstimate>> {
    let d_count = data.n_covariates();
    for group in groups {
        if group.is_empty() {
            return Err(Error::Config("importance group is empty".into()));
        }
        if let Some(&bad) = group.iter().find(|&&g| g >= d_count) {
            return Err(Error::Config(format!(
                "importance group index {bad} out of range (D = {d_count})"
            )));
        }
        if group.len() == d_count {
            return Err(Error::EmptyComplement);
        }
    }

    // standardize once so both runs see identical outcomes
    let standardized;
    let working = if data.standardization().is_some() {
        data
    } else {
        standardized = standardize_outcomes(data)?;
        &standardized
    };

    let (full, _) = estimate_association_detailed(specs, working, &cfg.assoc)?;
    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        let reduced_data = working.without_covariates(group)?;
        // same seed => same master partition and per-layer folds
        let (reduced, _) = estimate_association_detailed(specs, &reduced_data, &cfg.assoc)?;
        out.push(contrast(working, group, &full, &reduced, cfg)?);
    }
    Ok(out)
}

fn contrast(
    data: &Dataset,
    group: &[usize],
    full: &AssociationEstimate,
    reduced: &AssociationEstimate,
    cfg: &ImportanceConfig,
) -> Result<ImportanceEstimate> {
    let delta = full.r2 - reduced.r2;
    let n = full.n;

    // Δ = exp(l_r) − exp(l_f); gradient with respect to the four MSEs
    let ef = full.log_ratio.exp();
    let er = reduced.log_ratio.exp();
    let grad = [
        -ef / full.mse_model,
        ef / full.mse_null,
        er / reduced.mse_model,
        -er / reduced.mse_null,
    ];

    // fold-wise 4×4 influence covariance over the shared validation rows
    let k = full.curves.per_fold.len();
    if reduced.curves.per_fold.len() != k {
        return Err(Error::Config("full and reduced runs used different folds".into()));
    }
    let mut cov = [[0.0f64; 4]; 4];
    for (cf, cr) in full.curves.per_fold.iter().zip(&reduced.curves.per_fold) {
        if cf.val_idx != cr.val_idx {
            return Err(Error::Config(
                "full and reduced runs scored different validation rows".into(),
            ));
        }
        let nv = cf.d_model.len() as f64;
        let mut fold_cov = [[0.0f64; 4]; 4];
        for i in 0..cf.d_model.len() {
            let v = [cf.d_model[i], cf.d_null[i], cr.d_model[i], cr.d_null[i]];
            for a in 0..4 {
                for b in 0..4 {
                    fold_cov[a][b] += v[a] * v[b];
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                cov[a][b] += fold_cov[a][b] / nv / k as f64;
            }
        }
    }
    if !cfg.covariance_aware {
        // zero the cross-run blocks
        for a in 0..2 {
            for b in 2..4 {
                cov[a][b] = 0.0;
                cov[b][a] = 0.0;
            }
        }
    }
    let mut sigma2 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            sigma2 += grad[a] * cov[a][b] * grad[b];
        }
    }
    sigma2 = sigma2.max(0.0);

    let se = (sigma2 / n as f64).sqrt();
    let alpha = cfg.assoc.alpha;
    let z = normal_quantile(1.0 - alpha / 2.0);
    let (ci_lower, ci_upper) = (delta - z * se, delta + z * se);
    let p_value = if se == 0.0 {
        f64::from(delta == 0.0)
    } else {
        2.0 * normal_cdf(-(delta / se).abs())
    };

    Ok(ImportanceEstimate {
        group: group.to_vec(),
        group_names: group.iter().map(|&g| data.covariate_names()[g].clone()).collect(),
        delta,
        sigma2_delta: sigma2,
        ci_lower,
        ci_upper,
        p_value,
        alpha,
        full: full.clone(),
        reduced: reduced.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerKind;
    use crate::linalg::Mat;
    use crate::rng;

    fn specs() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::new(LearnerKind::InterceptOnly),
            LearnerSpec::new(LearnerKind::OlsMainTerms),
        ]
    }

    /// Two covariates: x1 drives both outcomes, x2 is pure noise.
    fn signal_noise_dataset(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut prng = rng::seeded(seed);
        let mut x = Mat::zeros(n, 2);
        let mut y = Mat::zeros(n, 2);
        for r in 0..n {
            let a = prng.random::<f64>() * 4.0;
            let b = prng.random::<f64>() * 4.0;
            x[(r, 0)] = a;
            x[(r, 1)] = b;
            y[(r, 0)] = 2.0 * a + rng::std_normal(&mut prng);
            y[(r, 1)] = a + rng::std_normal(&mut prng);
        }
        Dataset::new(x, y, vec!["x1".into(), "x2".into()], vec!["y1".into(), "y2".into()])
            .unwrap()
    }

    fn small_cfg(seed: u64) -> ImportanceConfig {
        ImportanceConfig {
            assoc: AssocConfig {
                k_outer: 5,
                k_weight: 4,
                k_inner: 4,
                seed,
                ..Default::default()
            },
            covariance_aware: true,
        }
    }

    #[test]
    fn delta_is_the_r2_contrast_and_ci_contains_it() {
        let d = signal_noise_dataset(300, 5);
        let est = estimate_importance(&specs(), &d, &[0], &small_cfg(1)).unwrap();
        assert!((est.delta - (est.full.r2 - est.reduced.r2)).abs() < 1e-12);
        assert!(est.ci_lower <= est.delta && est.delta <= est.ci_upper);
        // removing the only signal covariate must hurt a lot
        assert!(est.delta > 0.4, "delta = {}", est.delta);
        assert!(est.p_value < 0.01);
    }

    #[test]
    fn noise_covariate_has_negligible_importance() {
        let d = signal_noise_dataset(400, 9);
        let est = estimate_importance(&specs(), &d, &[1], &small_cfg(2)).unwrap();
        assert!(est.delta.abs() < 0.05, "delta = {}", est.delta);
    }

    #[test]
    fn group_covering_everything_is_rejected() {
        let d = signal_noise_dataset(100, 3);
        let err = estimate_importance(&specs(), &d, &[0, 1], &small_cfg(3)).unwrap_err();
        assert!(matches!(err, Error::EmptyComplement));
    }

    #[test]
    fn runs_share_fold_assignments() {
        let d = signal_noise_dataset(200, 7);
        let est = estimate_importance(&specs(), &d, &[1], &small_cfg(4)).unwrap();
        for (cf, cr) in est.full.curves.per_fold.iter().zip(&est.reduced.curves.per_fold) {
            assert_eq!(cf.val_idx, cr.val_idx);
        }
    }

    #[test]
    fn covariance_aware_variance_differs_from_independent() {
        let d = signal_noise_dataset(250, 11);
        let aware = estimate_importance(&specs(), &d, &[1], &small_cfg(5)).unwrap();
        let mut cfg = small_cfg(5);
        cfg.covariance_aware = false;
        let indep = estimate_importance(&specs(), &d, &[1], &cfg).unwrap();
        assert!((aware.delta - indep.delta).abs() < 1e-12);
        // the shared-data correlation is strongly positive here, so ignoring
        // it inflates the variance
        assert!(indep.sigma2_delta > aware.sigma2_delta);
    }

    #[test]
    fn many_groups_share_the_full_run() {
        let d = signal_noise_dataset(200, 13);
        let results =
            estimate_importance_many(&specs(), &d, &[vec![0], vec![1]], &small_cfg(6)).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].full.r2.to_bits(), results[1].full.r2.to_bits());
    }
}
