//! Machine-readable report envelopes shared by the CLI and tests. Every
//! report embeds the resolved configuration and master seed so a run can be
//! reproduced exactly from its own output.

use serde::Serialize;

use crate::association::{AssociationEstimate, TestDecision};
use crate::baselines::{PcaFTest, PermutationResult};
use crate::importance::ImportanceEstimate;
use crate::weights::WeightSearchResult;

#[derive(Clone, Debug, Serialize)]
pub struct WeightsSection {
    pub omega: Vec<f64>,
    pub r2_at_omega: f64,
    /// True when the maximized cross-validated R² is not positive, in which
    /// case there is likely no meaningful association to report.
    pub no_meaningful_association: bool,
    pub starts: usize,
}

impl WeightsSection {
    pub fn from_search(search: &WeightSearchResult) -> Self {
        WeightsSection {
            omega: search.omega.as_slice().to_vec(),
            r2_at_omega: search.r2_at_omega,
            no_meaningful_association: search.r2_at_omega <= 0.0,
            starts: search.trace.len(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselinesSection {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub permutation_tests: Vec<PermutationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca_f_test: Option<PcaFTest>,
}

/// Top-level report for an `analyze` run.
#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport<C: Serialize> {
    pub config: C,
    pub seed: u64,
    pub association: AssociationEstimate,
    pub test: TestDecision,
    pub full_data_weights: WeightsSection,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub importance: Vec<ImportanceEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baselines: Option<BaselinesSection>,
}
