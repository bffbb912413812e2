//! Candidate learner registry: each learner maps a training index set to a
//! univariate prediction function. Fits read only the rows they are given,
//! and stochastic learners are seeded, so refits are reproducible and
//! leakage-free by construction.

mod elastic;
mod linear;
mod spline;
mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub use tree::{BoostParams, ForestParams};

/// Learner families available to the library.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    InterceptOnly,
    OlsMainTerms,
    ForwardStepwise,
    SplineAdditive,
    TreeEnsemble,
    BoostedTrees,
    ElasticNet,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::InterceptOnly => "intercept-only",
            LearnerKind::OlsMainTerms => "ols-main-terms",
            LearnerKind::ForwardStepwise => "forward-stepwise",
            LearnerKind::SplineAdditive => "spline-additive",
            LearnerKind::TreeEnsemble => "tree-ensemble",
            LearnerKind::BoostedTrees => "boosted-trees",
            LearnerKind::ElasticNet => "elastic-net",
        }
    }

    pub fn from_name(name: &str) -> Option<LearnerKind> {
        Some(match name {
            "intercept-only" => LearnerKind::InterceptOnly,
            "ols-main-terms" => LearnerKind::OlsMainTerms,
            "forward-stepwise" => LearnerKind::ForwardStepwise,
            "spline-additive" => LearnerKind::SplineAdditive,
            "tree-ensemble" => LearnerKind::TreeEnsemble,
            "boosted-trees" => LearnerKind::BoostedTrees,
            "elastic-net" => LearnerKind::ElasticNet,
            _ => return None,
        })
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A learner kind plus its hyperparameters. Unknown keys and out-of-range
/// values are rejected when the spec is validated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hyperparameters: BTreeMap<String, f64>,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        LearnerSpec { kind, hyperparameters: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.hyperparameters.insert(key.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<ResolvedSpec> {
        let bad = |detail: String| Error::InvalidHyperparameter {
            kind: self.kind.name().to_string(),
            detail,
        };
        let allowed: &[&str] = match self.kind {
            LearnerKind::InterceptOnly | LearnerKind::OlsMainTerms | LearnerKind::ForwardStepwise => {
                &[]
            }
            LearnerKind::SplineAdditive => &["df"],
            LearnerKind::TreeEnsemble => &["n_trees", "max_depth", "min_leaf", "mtry"],
            LearnerKind::BoostedTrees => {
                &["n_rounds", "learning_rate", "max_depth", "min_leaf", "subsample"]
            }
            LearnerKind::ElasticNet => &["lambda", "l1_ratio", "max_iter", "tol"],
        };
        for key in self.hyperparameters.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(bad(format!("unknown key '{key}'")));
            }
        }
        let get = |key: &str, default: f64| *self.hyperparameters.get(key).unwrap_or(&default);
        let get_count = |key: &str, default: f64, min: f64, max: f64| -> Result<usize> {
            let v = get(key, default);
            if !v.is_finite() || v < min || v > max || v.fract() != 0.0 {
                return Err(bad(format!("'{key}' must be an integer in [{min}, {max}], got {v}")));
            }
            Ok(v as usize)
        };
        let resolved = match self.kind {
            LearnerKind::InterceptOnly => ResolvedSpec::InterceptOnly,
            LearnerKind::OlsMainTerms => ResolvedSpec::OlsMainTerms,
            LearnerKind::ForwardStepwise => ResolvedSpec::ForwardStepwise,
            LearnerKind::SplineAdditive => {
                ResolvedSpec::SplineAdditive { df: get_count("df", 4.0, 2.0, 10.0)? }
            }
            LearnerKind::TreeEnsemble => ResolvedSpec::TreeEnsemble(ForestParams {
                n_trees: get_count("n_trees", 200.0, 1.0, 5000.0)?,
                max_depth: get_count("max_depth", 4.0, 1.0, 30.0)?,
                min_leaf: get_count("min_leaf", 5.0, 1.0, 1e6)?,
                mtry: get_count("mtry", 0.0, 0.0, 1e6)?, // 0 = ceil(D/3)
            }),
            LearnerKind::BoostedTrees => {
                let rate = get("learning_rate", 0.1);
                let subsample = get("subsample", 1.0);
                if !(rate > 0.0 && rate <= 1.0) {
                    return Err(bad(format!("'learning_rate' must be in (0, 1], got {rate}")));
                }
                if !(subsample > 0.0 && subsample <= 1.0) {
                    return Err(bad(format!("'subsample' must be in (0, 1], got {subsample}")));
                }
                ResolvedSpec::BoostedTrees(BoostParams {
                    n_rounds: get_count("n_rounds", 200.0, 1.0, 1e5)?,
                    learning_rate: rate,
                    max_depth: get_count("max_depth", 3.0, 1.0, 30.0)?,
                    min_leaf: get_count("min_leaf", 10.0, 1.0, 1e6)?,
                    subsample,
                })
            }
            LearnerKind::ElasticNet => {
                let lambda = get("lambda", 0.1);
                let l1_ratio = get("l1_ratio", 0.5);
                let tol = get("tol", 1e-7);
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(bad(format!("'lambda' must be >= 0, got {lambda}")));
                }
                if !(0.0..=1.0).contains(&l1_ratio) {
                    return Err(bad(format!("'l1_ratio' must be in [0, 1], got {l1_ratio}")));
                }
                if !(tol > 0.0) {
                    return Err(bad(format!("'tol' must be > 0, got {tol}")));
                }
                ResolvedSpec::ElasticNet {
                    lambda,
                    l1_ratio,
                    max_iter: get_count("max_iter", 1000.0, 1.0, 1e7)?,
                    tol,
                }
            }
        };
        Ok(resolved)
    }
}

/// Hyperparameters after validation and default filling.
#[derive(Clone, Debug)]
pub enum ResolvedSpec {
    InterceptOnly,
    OlsMainTerms,
    ForwardStepwise,
    SplineAdditive { df: usize },
    TreeEnsemble(ForestParams),
    BoostedTrees(BoostParams),
    ElasticNet { lambda: f64, l1_ratio: f64, max_iter: usize, tol: f64 },
}

/// Where a predictor came from: learner kind plus a digest of the training
/// index set, so reuse bookkeeping and leakage tests can identify fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub kind: LearnerKind,
    pub train_digest: u64,
}

#[derive(Clone, Debug)]
pub(crate) enum FittedModel {
    Constant(f64),
    /// coef[0] is the intercept; coef[1..] align with covariate columns.
    Linear { coef: Vec<f64> },
    /// Intercept plus selected (column, coefficient) terms.
    LinearSubset { intercept: f64, terms: Vec<(usize, f64)> },
    Spline(spline::SplineModel),
    Forest(tree::ForestModel),
    Boosted(tree::BoostModel),
    ElasticNet { intercept: f64, coef: Vec<f64> },
}

/// An immutable fitted prediction function from a D-vector to a real.
#[derive(Clone, Debug)]
pub struct Predictor {
    model: FittedModel,
    input_dim: usize,
    provenance: Provenance,
}

impl Predictor {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(self.eval(x))
    }

    /// Predictions for a set of rows of a covariate matrix. The matrix width
    /// is checked once.
    pub fn predict_rows(&self, x: &Mat, rows: &[usize]) -> Result<Vec<f64>> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.cols() });
        }
        Ok(rows.iter().map(|&r| self.eval(x.row(r))).collect())
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match &self.model {
            FittedModel::Constant(c) => *c,
            FittedModel::Linear { coef } => {
                let mut v = coef[0];
                for (b, xi) in coef[1..].iter().zip(x) {
                    v += b * xi;
                }
                v
            }
            FittedModel::LinearSubset { intercept, terms } => {
                let mut v = *intercept;
                for &(col, b) in terms {
                    v += b * x[col];
                }
                v
            }
            FittedModel::Spline(m) => m.eval(x),
            FittedModel::Forest(m) => m.eval(x),
            FittedModel::Boosted(m) => m.eval(x),
            FittedModel::ElasticNet { intercept, coef } => {
                let mut v = *intercept;
                for (b, xi) in coef.iter().zip(x) {
                    v += b * xi;
                }
                v
            }
        }
    }
}

/// Fit one candidate learner for outcome `outcome_index` using only the rows
/// in `train_idx`.
pub fn fit_learner(
    spec: &LearnerSpec,
    data: &Dataset,
    outcome_index: usize,
    train_idx: &[usize],
    seed: u64,
) -> Result<Predictor> {
    let resolved = spec.validate()?;
    if train_idx.is_empty() {
        return Err(Error::TooFewObservations { detail: "empty training index set".into() });
    }
    if outcome_index >= data.n_outcomes() {
        return Err(Error::Config(format!(
            "outcome index {outcome_index} out of range (J = {})",
            data.n_outcomes()
        )));
    }
    // Gather training rows so nothing below can touch the rest of the data.
    let x = data.covariates().gather_rows(train_idx);
    let y: Vec<f64> = {
        let col = data.outcome(outcome_index);
        train_idx.iter().map(|&i| col[i]).collect()
    };

    let model = match resolved {
        ResolvedSpec::InterceptOnly => {
            FittedModel::Constant(y.iter().sum::<f64>() / y.len() as f64)
        }
        ResolvedSpec::OlsMainTerms => FittedModel::Linear { coef: linear::fit_ols(&x, &y)? },
        ResolvedSpec::ForwardStepwise => {
            let (intercept, terms) = linear::fit_forward_stepwise(&x, &y)?;
            FittedModel::LinearSubset { intercept, terms }
        }
        ResolvedSpec::SplineAdditive { df } => FittedModel::Spline(spline::fit(&x, &y, df)?),
        ResolvedSpec::TreeEnsemble(p) => FittedModel::Forest(tree::fit_forest(&x, &y, &p, seed)),
        ResolvedSpec::BoostedTrees(p) => FittedModel::Boosted(tree::fit_boost(&x, &y, &p, seed)),
        ResolvedSpec::ElasticNet { lambda, l1_ratio, max_iter, tol } => {
            let (intercept, coef) = elastic::fit(&x, &y, lambda, l1_ratio, max_iter, tol)?;
            FittedModel::ElasticNet { intercept, coef }
        }
    };

    let predictor = Predictor {
        model,
        input_dim: data.n_covariates(),
        provenance: Provenance { kind: spec.kind, train_digest: digest_indices(train_idx) },
    };
    // A fit that produced non-finite output is unusable regardless of the
    // ridge fallback; surface it instead of propagating NaNs downstream.
    if !predictor.eval(data.covariates().row(train_idx[0])).is_finite() {
        return Err(Error::SingularFit {
            kind: spec.kind.name().into(),
            detail: "fitted model evaluates to a non-finite value".into(),
        });
    }
    Ok(predictor)
}

fn digest_indices(idx: &[usize]) -> u64 {
    // FNV-1a over the index sequence
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in idx {
        let mut v = i as u64;
        for _ in 0..8 {
            h ^= v & 0xff;
            h = h.wrapping_mul(0x100_0000_01b3);
            v >>= 8;
        }
    }
    h
}
