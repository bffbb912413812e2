//! Observed-data model: the dataset with its standardization metadata,
//! K-fold partitions, simplex weight vectors, and the nonparametric R²
//! arithmetic shared by every downstream module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

/// Per-outcome standardization record: the (mean, sd) that was divided out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

/// An n×D covariate matrix paired with an n×J outcome matrix.
///
/// Immutable after construction; all pipeline operations borrow it.
#[derive(Clone, Debug)]
pub struct Dataset {
    covariates: Mat,
    outcomes: Mat,
    covariate_names: Vec<String>,
    outcome_names: Vec<String>,
    standardization: Option<Vec<Standardization>>,
}

impl Dataset {
    pub fn new(
        covariates: Mat,
        outcomes: Mat,
        covariate_names: Vec<String>,
        outcome_names: Vec<String>,
    ) -> Result<Self> {
        let n = covariates.rows();
        if n < 2 {
            return Err(Error::TooFewObservations {
                detail: format!("need at least 2 rows, got {n}"),
            });
        }
        if outcomes.rows() != n {
            return Err(Error::Config(format!(
                "covariates have {n} rows but outcomes have {}",
                outcomes.rows()
            )));
        }
        if covariates.cols() == 0 || outcomes.cols() == 0 {
            return Err(Error::Config("need at least one covariate and one outcome".into()));
        }
        if covariate_names.len() != covariates.cols() || outcome_names.len() != outcomes.cols() {
            return Err(Error::Config("column name count does not match matrix shape".into()));
        }
        for r in 0..n {
            if covariates.row(r).iter().find(|v| !v.is_finite()).is_some() {
                return Err(Error::NonFinite { place: "covariates".into(), row: r });
            }
            if outcomes.row(r).iter().find(|v| !v.is_finite()).is_some() {
                return Err(Error::NonFinite { place: "outcomes".into(), row: r });
            }
        }
        Ok(Dataset { covariates, outcomes, covariate_names, outcome_names, standardization: None })
    }

    /// Build from columns, turning missing covariate cells into a per-column
    /// missingness indicator plus a zero fill. Missing outcomes are an error.
    pub fn from_columns(
        covariate_cols: Vec<(String, Vec<Option<f64>>)>,
        outcome_cols: Vec<(String, Vec<Option<f64>>)>,
    ) -> Result<Self> {
        let n = covariate_cols
            .first()
            .map(|(_, v)| v.len())
            .or_else(|| outcome_cols.first().map(|(_, v)| v.len()))
            .unwrap_or(0);

        let mut x_names = Vec::new();
        let mut x_cols: Vec<Vec<f64>> = Vec::new();
        for (name, col) in &covariate_cols {
            if col.len() != n {
                return Err(Error::Config(format!("column '{name}' has ragged length")));
            }
            let any_missing = col.iter().any(Option::is_none);
            let filled: Vec<f64> = col.iter().map(|v| v.unwrap_or(0.0)).collect();
            x_names.push(name.clone());
            x_cols.push(filled);
            if any_missing {
                let indicator: Vec<f64> =
                    col.iter().map(|v| if v.is_none() { 1.0 } else { 0.0 }).collect();
                x_names.push(format!("{name}_missing"));
                x_cols.push(indicator);
            }
        }

        let mut y_names = Vec::new();
        let mut y_cols: Vec<Vec<f64>> = Vec::new();
        for (name, col) in &outcome_cols {
            if col.len() != n {
                return Err(Error::Config(format!("column '{name}' has ragged length")));
            }
            if let Some(row) = col.iter().position(Option::is_none) {
                return Err(Error::MissingOutcome { name: name.clone(), row });
            }
            y_names.push(name.clone());
            y_cols.push(col.iter().map(|v| v.unwrap()).collect());
        }

        let d = x_cols.len();
        let j = y_cols.len();
        let mut x = Mat::zeros(n, d);
        for (c, col) in x_cols.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                x[(r, c)] = v;
            }
        }
        let mut y = Mat::zeros(n, j);
        for (c, col) in y_cols.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                y[(r, c)] = v;
            }
        }
        Dataset::new(x, y, x_names, y_names)
    }

    pub fn n(&self) -> usize {
        self.covariates.rows()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.cols()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.cols()
    }

    pub fn covariates(&self) -> &Mat {
        &self.covariates
    }

    pub fn outcomes(&self) -> &Mat {
        &self.outcomes
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcome_names
    }

    pub fn standardization(&self) -> Option<&[Standardization]> {
        self.standardization.as_deref()
    }

    pub fn outcome(&self, j: usize) -> Vec<f64> {
        self.outcomes.column(j)
    }

    /// Dataset restricted to the covariate columns *not* in `drop` (outcomes
    /// untouched). Used by variable-importance contrasts.
    pub fn without_covariates(&self, drop: &[usize]) -> Result<Dataset> {
        let keep: Vec<usize> =
            (0..self.n_covariates()).filter(|i| !drop.contains(i)).collect();
        if keep.is_empty() {
            return Err(Error::EmptyComplement);
        }
        Ok(Dataset {
            covariates: self.covariates.gather_cols(&keep),
            outcomes: self.outcomes.clone(),
            covariate_names: keep.iter().map(|&i| self.covariate_names[i].clone()).collect(),
            outcome_names: self.outcome_names.clone(),
            standardization: self.standardization.clone(),
        })
    }
}

/// Center and scale every outcome column by its full-sample mean and sd
/// (n−1 denominator), recording the pair for later back-transformation.
pub fn standardize_outcomes(data: &Dataset) -> Result<Dataset> {
    let n = data.n();
    let j = data.n_outcomes();
    let mut meta = Vec::with_capacity(j);
    let mut y = data.outcomes.clone();
    for c in 0..j {
        let col = data.outcomes.column(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if sd == 0.0 {
            return Err(Error::ConstantOutcome { name: data.outcome_names[c].clone() });
        }
        for r in 0..n {
            y[(r, c)] = (y[(r, c)] - mean) / sd;
        }
        meta.push(Standardization { mean, sd });
    }
    Ok(Dataset {
        covariates: data.covariates.clone(),
        outcomes: y,
        covariate_names: data.covariate_names.clone(),
        outcome_names: data.outcome_names.clone(),
        standardization: Some(meta),
    })
}

/// Invert [`standardize_outcomes`] using the stored metadata.
pub fn destandardize_outcomes(data: &Dataset) -> Result<Dataset> {
    let meta = data
        .standardization
        .as_ref()
        .ok_or_else(|| Error::Config("dataset carries no standardization metadata".into()))?;
    let mut y = data.outcomes.clone();
    for c in 0..data.n_outcomes() {
        for r in 0..data.n() {
            y[(r, c)] = y[(r, c)] * meta[c].sd + meta[c].mean;
        }
    }
    Ok(Dataset {
        covariates: data.covariates.clone(),
        outcomes: y,
        covariate_names: data.covariate_names.clone(),
        outcome_names: data.outcome_names.clone(),
        standardization: None,
    })
}

/// A partition of `0..n` into K validation folds of near-equal size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    n: usize,
    k: usize,
    fold_of: Vec<usize>, // labels in 0..k
}

impl FoldAssignment {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Fold label (0-based) of observation `i`.
    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    /// Indices in validation fold `k`, in ascending order.
    pub fn validation_set(&self, k: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.fold_of[i] == k).collect()
    }

    /// Indices outside validation fold `k`, in ascending order.
    pub fn training_set(&self, k: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.fold_of[i] != k).collect()
    }

    /// Build an assignment from explicit labels (used by the fold lattice,
    /// where inner layers inherit the master partition).
    pub fn from_labels(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        let n = fold_of.len();
        if k < 2 || k > n {
            return Err(Error::BadFoldCount { k, n, reuse: false });
        }
        let mut seen = vec![false; k];
        for &f in &fold_of {
            if f >= k {
                return Err(Error::Config(format!("fold label {f} out of range for K={k}")));
            }
            seen[f] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Config("some fold labels are unused".into()));
        }
        Ok(FoldAssignment { n, k, fold_of })
    }
}

/// Uniformly random partition into K folds of size ⌊n/K⌋ or ⌈n/K⌉,
/// via a seeded Fisher-Yates shuffle followed by contiguous chunking.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::BadFoldCount { k, n, reuse: false });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut prng = rng::seeded(seed);
    rng::shuffle(&mut order, &mut prng);
    let base = n / k;
    let extra = n % k; // first `extra` folds get one more
    let mut fold_of = vec![0usize; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + if fold < extra { 1 } else { 0 };
        for &i in &order[pos..pos + size] {
            fold_of[i] = fold;
        }
        pos += size;
    }
    Ok(FoldAssignment { n, k, fold_of })
}

/// A non-negative vector summing to one. Used for both the stacking weights
/// over learners and the outcome weights over components of Y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Config("empty weight vector".into()));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::Config("weights must be finite and non-negative".into()));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-8 {
            return Err(Error::Config(format!("weights sum to {s}, not 1")));
        }
        Ok(SimplexWeights(w))
    }

    pub fn uniform(m: usize) -> Self {
        SimplexWeights(vec![1.0 / m as f64; m])
    }

    pub fn vertex(m: usize, i: usize) -> Self {
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        SimplexWeights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// A prediction function's MSE paired with the marginal-mean benchmark MSE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsePair {
    pub mse_model: f64,
    pub mse_null: f64,
}

/// Proportional reduction in MSE relative to the marginal-mean predictor.
/// Negative values mean the marginal mean predicts better than the model.
pub fn nonparametric_r2(p: MsePair) -> Result<f64> {
    if !(p.mse_null > 0.0) {
        return Err(Error::DegenerateNull { mse_null: p.mse_null });
    }
    Ok(1.0 - p.mse_model / p.mse_null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(yvals: &[f64]) -> Dataset {
        let n = yvals.len();
        let x = Mat::from_vec(n, 1, (0..n).map(|i| i as f64).collect());
        let y = Mat::from_vec(n, 1, yvals.to_vec());
        Dataset::new(x, y, vec!["x".into()], vec!["y".into()]).unwrap()
    }

    #[test]
    fn standardize_centers_and_scales() {
        let d = standardize_outcomes(&toy(&[1.0, 2.0, 3.0])).unwrap();
        let y = d.outcome(0);
        assert!((y[0] + 1.0).abs() < 1e-12);
        assert!(y[1].abs() < 1e-12);
        assert!((y[2] - 1.0).abs() < 1e-12);
        let meta = d.standardization().unwrap()[0];
        assert!((meta.mean - 2.0).abs() < 1e-12);
        assert!((meta.sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_is_idempotent_on_standardized_data() {
        let d = standardize_outcomes(&toy(&[4.0, 9.0, 2.0, 7.0])).unwrap();
        let again = standardize_outcomes(&d).unwrap();
        for (a, b) in again.outcome(0).iter().zip(d.outcome(0)) {
            assert!((a - b).abs() < 1e-12);
        }
        let meta = again.standardization().unwrap()[0];
        assert!(meta.mean.abs() < 1e-12 && (meta.sd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_outcome_is_rejected() {
        let err = standardize_outcomes(&toy(&[5.0, 5.0, 5.0])).unwrap_err();
        assert!(matches!(err, Error::ConstantOutcome { .. }));
    }

    #[test]
    fn destandardize_roundtrips() {
        let original = toy(&[3.0, -1.0, 7.0, 4.5, 0.25]);
        let std = standardize_outcomes(&original).unwrap();
        let back = destandardize_outcomes(&std).unwrap();
        for (a, b) in back.outcome(0).iter().zip(original.outcome(0)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn folds_split_evenly() {
        let f = make_folds(10, 2, 1).unwrap();
        assert_eq!(f.validation_set(0).len(), 5);
        assert_eq!(f.validation_set(1).len(), 5);

        let f = make_folds(7, 3, 1).unwrap();
        let mut sizes: Vec<usize> = (0..3).map(|k| f.validation_set(k).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);

        let f = make_folds(5, 5, 1).unwrap();
        for k in 0..5 {
            assert_eq!(f.validation_set(k).len(), 1);
        }
    }

    #[test]
    fn fold_bounds_are_enforced() {
        assert!(matches!(make_folds(10, 1, 0), Err(Error::BadFoldCount { .. })));
        assert!(matches!(make_folds(3, 4, 0), Err(Error::BadFoldCount { .. })));
    }

    #[test]
    fn folds_are_seed_deterministic() {
        let a = make_folds(37, 5, 99).unwrap();
        let b = make_folds(37, 5, 99).unwrap();
        assert_eq!(a, b);
        let c = make_folds(37, 5, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn r2_examples() {
        let r = |m, u| nonparametric_r2(MsePair { mse_model: m, mse_null: u }).unwrap();
        assert!((r(0.0, 4.0) - 1.0).abs() < 1e-15);
        assert!(r(4.0, 4.0).abs() < 1e-15);
        assert!((r(6.0, 4.0) + 0.5).abs() < 1e-15);
        assert!(nonparametric_r2(MsePair { mse_model: 1.0, mse_null: 0.0 }).is_err());
    }

    #[test]
    fn missing_covariates_get_indicators_and_missing_outcomes_fail() {
        let d = Dataset::from_columns(
            vec![("a".into(), vec![Some(1.0), None, Some(3.0)])],
            vec![("y".into(), vec![Some(1.0), Some(2.0), Some(3.0)])],
        )
        .unwrap();
        assert_eq!(d.covariate_names(), &["a".to_string(), "a_missing".to_string()]);
        assert_eq!(d.covariates().column(0), vec![1.0, 0.0, 3.0]);
        assert_eq!(d.covariates().column(1), vec![0.0, 1.0, 0.0]);

        let err = Dataset::from_columns(
            vec![("a".into(), vec![Some(1.0), Some(2.0)])],
            vec![("y".into(), vec![Some(1.0), None])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingOutcome { row: 1, .. }));
    }

    proptest! {
        #[test]
        fn fold_partition_is_exact(n in 4usize..60, kseed in 0u64..50) {
            let k = 2 + (kseed as usize % (n - 1)).min(n - 2);
            let f = make_folds(n, k, kseed).unwrap();
            let mut seen = vec![false; n];
            let mut total = 0;
            let mut min_size = usize::MAX;
            let mut max_size = 0;
            for fold in 0..k {
                let v = f.validation_set(fold);
                min_size = min_size.min(v.len());
                max_size = max_size.max(v.len());
                for i in v {
                    prop_assert!(!seen[i], "index {} in two folds", i);
                    seen[i] = true;
                    total += 1;
                }
            }
            prop_assert_eq!(total, n);
            prop_assert!(max_size - min_size <= 1);
        }

        #[test]
        fn r2_scale_invariance(m in 0.0f64..100.0, u in 0.1f64..100.0, c in 0.1f64..50.0) {
            let a = nonparametric_r2(MsePair { mse_model: m, mse_null: u }).unwrap();
            let b = nonparametric_r2(MsePair { mse_model: c * m, mse_null: c * u }).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn r2_decreasing_in_model_mse(m in 0.0f64..50.0, bump in 0.001f64..10.0, u in 0.1f64..50.0) {
            let a = nonparametric_r2(MsePair { mse_model: m, mse_null: u }).unwrap();
            let b = nonparametric_r2(MsePair { mse_model: m + bump, mse_null: u }).unwrap();
            prop_assert!(b < a);
        }
    }
}
