//! Analysis configuration: a JSON file, command-line overrides, and the
//! resolved form embedded in every report so runs can be reproduced from
//! their own output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mvassoc::association::AssocConfig;
use mvassoc::baselines::CcaStatKind;
use mvassoc::learners::{LearnerKind, LearnerSpec};
use mvassoc::weights::OmegaOptions;
use mvassoc::Error;

pub fn default_learners() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::new(LearnerKind::InterceptOnly),
        LearnerSpec::new(LearnerKind::OlsMainTerms),
        LearnerSpec::new(LearnerKind::ForwardStepwise),
    ]
}

fn default_folds() -> FoldsConfig {
    FoldsConfig { outer: 10, weight: 10, inner: 10 }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_permutations() -> usize {
    1000
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FoldsConfig {
    pub outer: usize,
    pub weight: usize,
    pub inner: usize,
}

/// Outcome-weight optimizer settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_omega_tol")]
    pub tolerance: f64,
    #[serde(default = "default_omega_iters")]
    pub max_iterations: usize,
    #[serde(default)]
    pub extra_starts: usize,
}

fn default_omega_tol() -> f64 {
    1e-6
}

fn default_omega_iters() -> usize {
    2000
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tolerance: default_omega_tol(),
            max_iterations: default_omega_iters(),
            extra_starts: 0,
        }
    }
}

/// The resolved analysis configuration. Serialized verbatim into reports;
/// a report's `config` section is itself a valid `--config` file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub outcomes: Vec<String>,
    /// Covariate column names; omit to use every non-outcome column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    #[serde(default = "default_learners")]
    pub learners: Vec<LearnerSpec>,
    #[serde(default = "default_folds")]
    pub folds: FoldsConfig,
    #[serde(default)]
    pub reuse: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Named covariate groups for importance contrasts.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, Vec<String>>,
    /// Baseline tests to run alongside the primary method.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<String>,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            data: None,
            outcomes: Vec::new(),
            covariates: None,
            learners: default_learners(),
            folds: default_folds(),
            reuse: false,
            alpha: default_alpha(),
            seed: 0,
            groups: BTreeMap::new(),
            baselines: Vec::new(),
            permutations: default_permutations(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.outcomes.is_empty() {
            return Err(Error::Config("no outcome columns configured".into()));
        }
        if let Some(cov) = &self.covariates {
            if cov.is_empty() {
                return Err(Error::Config("covariate list is empty".into()));
            }
            if let Some(both) = cov.iter().find(|c| self.outcomes.contains(c)) {
                return Err(Error::Config(format!(
                    "column '{both}' is listed as both outcome and covariate"
                )));
            }
        }
        if self.learners.is_empty() {
            return Err(Error::Config("learner library is empty".into()));
        }
        for spec in &self.learners {
            spec.validate()?;
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0,1), got {}", self.alpha)));
        }
        if self.reuse && (self.folds.weight != self.folds.outer.saturating_sub(1)
            || self.folds.inner != self.folds.outer.saturating_sub(2))
        {
            // reuse ties the layers; only flag configs that set conflicting values
            if self.folds.weight != default_folds().weight
                || self.folds.inner != default_folds().inner
            {
                return Err(Error::Config(format!(
                    "fit reuse requires K° = K−1 and K* = K−2 (K = {}); \
                     leave weight/inner folds unset or set them to {} and {}",
                    self.folds.outer,
                    self.folds.outer - 1,
                    self.folds.outer - 2
                )));
            }
        }
        for b in &self.baselines {
            if CcaStatKind::from_name(b).is_none() && b != "pca-f" {
                return Err(Error::Config(format!(
                    "unknown baseline '{b}' (expected wilks, hotelling-lawley, \
                     pillai-bartlett, roy, or pca-f)"
                )));
            }
        }
        Ok(())
    }

    pub fn assoc_config(&self) -> AssocConfig {
        AssocConfig {
            k_outer: self.folds.outer,
            k_weight: self.folds.weight,
            k_inner: self.folds.inner,
            reuse: self.reuse,
            seed: self.seed,
            alpha: self.alpha,
            omega: OmegaOptions {
                tol: self.optimizer.tolerance,
                max_iter: self.optimizer.max_iterations,
                extra_starts: self.optimizer.extra_starts,
                seed: self.seed,
            },
            ..Default::default()
        }
    }

    /// Map configured group names to covariate indices of `names`.
    pub fn group_indices(&self, names: &[String]) -> Result<Vec<(String, Vec<usize>)>, Error> {
        self.groups
            .iter()
            .map(|(label, cols)| {
                let idx = cols
                    .iter()
                    .map(|col| {
                        names.iter().position(|n| n == col).ok_or_else(|| {
                            Error::Config(format!(
                                "group '{label}': column '{col}' is not a covariate"
                            ))
                        })
                    })
                    .collect::<Result<Vec<usize>, Error>>()?;
                Ok((label.clone(), idx))
            })
            .collect()
    }
}

/// Parse the `--folds K[,K°[,K*]]` flag.
pub fn parse_folds(text: &str) -> Result<FoldsConfig, Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.is_empty() || parts.len() > 3 {
        return Err(Error::Config(format!("cannot parse --folds '{text}'")));
    }
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("cannot parse fold count '{s}'")))
    };
    let outer = parse(parts[0])?;
    let weight = if parts.len() > 1 { parse(parts[1])? } else { outer };
    let inner = if parts.len() > 2 { parse(parts[2])? } else { weight };
    Ok(FoldsConfig { outer, weight, inner })
}
