//! Outcome-weight search: choose the simplex point ω maximizing the
//! cross-validated nonparametric R² of the composite super learner.
//!
//! Because per-outcome predictions combine linearly, both MSEs in the
//! objective are quadratic forms in ω. The out-of-fold prediction matrix is
//! reduced once to a pair of J×J matrices, after which every objective
//! evaluation costs O(J²) regardless of sample size or library size.

use crate::data::{Dataset, FoldAssignment, SimplexWeights};
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::rng;
use crate::simplex;
use crate::superlearner::FittedEnsemble;

#[derive(Clone, Debug)]
pub struct OmegaOptions {
    /// Convergence tolerance on the objective.
    pub tol: f64,
    pub max_iter: usize,
    /// Random starts added to the uniform center and the J vertices.
    pub extra_starts: usize,
    pub seed: u64,
}

impl Default for OmegaOptions {
    fn default() -> Self {
        OmegaOptions { tol: 1e-6, max_iter: 2000, extra_starts: 0, seed: 0 }
    }
}

/// One multi-start record: where the search started and where it ended.
#[derive(Clone, Debug)]
pub struct StartTrace {
    pub start: Vec<f64>,
    pub initial_r2: f64,
    pub final_r2: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct WeightSearchResult {
    pub omega: SimplexWeights,
    pub r2_at_omega: f64,
    pub trace: Vec<StartTrace>,
}

/// The composite objective in quadratic-form representation:
/// model MSE = ωᵀAω, null MSE = ωᵀBω, R²(ω) = 1 − ωᵀAω / ωᵀBω.
#[derive(Clone, Debug)]
pub struct WeightObjective {
    pub model: Mat,
    pub null: Mat,
}

impl WeightObjective {
    /// Reduce out-of-fold residuals to the quadratic forms. `predictions`
    /// holds one row per working observation and one column per outcome;
    /// `outcomes` the matching outcome rows; `row_fold` the validation fold
    /// of each row (for the 1/(K·|V_k|) fold weighting of the model MSE).
    /// The null MSE uses the in-sample mean of the composite outcome.
    pub fn from_out_of_fold(
        predictions: &Mat,
        outcomes: &Mat,
        row_fold: &[usize],
        k: usize,
    ) -> Self {
        let n = predictions.rows();
        let j = predictions.cols();
        let mut fold_sizes = vec![0usize; k];
        for &f in row_fold {
            fold_sizes[f] += 1;
        }
        let mut model = Mat::zeros(j, j);
        for r in 0..n {
            let w = 1.0 / (k as f64 * fold_sizes[row_fold[r]] as f64);
            let pr = predictions.row(r);
            let yr = outcomes.row(r);
            for a in 0..j {
                let ra = yr[a] - pr[a];
                for b in a..j {
                    model[(a, b)] += w * ra * (yr[b] - pr[b]);
                }
            }
        }
        let means = outcomes.col_means();
        let mut null = Mat::zeros(j, j);
        for r in 0..n {
            let yr = outcomes.row(r);
            for a in 0..j {
                let da = yr[a] - means[a];
                for b in a..j {
                    null[(a, b)] += da * (yr[b] - means[b]) / n as f64;
                }
            }
        }
        for m in [&mut model, &mut null] {
            for a in 0..j {
                for b in 0..a {
                    m[(a, b)] = m[(b, a)];
                }
            }
        }
        WeightObjective { model, null }
    }

    pub fn n_outcomes(&self) -> usize {
        self.model.rows()
    }

    pub fn r2(&self, omega: &[f64]) -> Result<f64> {
        let b = quad(&self.null, omega);
        if b <= 1e-12 {
            return Err(Error::DegenerateNull { mse_null: b });
        }
        Ok(1.0 - quad(&self.model, omega) / b)
    }

    // minimized ratio q(ω) = ωᵀAω / ωᵀBω and its gradient
    fn ratio_grad(&self, omega: &[f64]) -> (f64, Vec<f64>) {
        let a_omega = self.model.mul_vec(omega);
        let b_omega = self.null.mul_vec(omega);
        let a = dot(omega, &a_omega);
        let b = dot(omega, &b_omega).max(1e-300);
        let q = a / b;
        let grad: Vec<f64> = a_omega
            .iter()
            .zip(&b_omega)
            .map(|(ga, gb)| (2.0 * ga * b - a * 2.0 * gb) / (b * b))
            .collect();
        (q, grad)
    }

    /// Multi-start projected-gradient maximization of R² over the simplex.
    pub fn maximize(&self, opts: &OmegaOptions) -> Result<WeightSearchResult> {
        let j = self.n_outcomes();
        if j == 1 {
            let omega = SimplexWeights::vertex(1, 0);
            let r2 = self.r2(omega.as_slice())?;
            return Ok(WeightSearchResult {
                omega,
                r2_at_omega: r2,
                trace: vec![StartTrace {
                    start: vec![1.0],
                    initial_r2: r2,
                    final_r2: r2,
                    iterations: 0,
                }],
            });
        }
        let mut starts: Vec<Vec<f64>> = vec![vec![1.0 / j as f64; j]];
        for v in 0..j {
            let mut s = vec![0.0; j];
            s[v] = 1.0;
            starts.push(s);
        }
        let mut prng = rng::seeded(rng::derive(opts.seed, &[0x6f6d]));
        for _ in 0..opts.extra_starts {
            use rand::Rng;
            let raw: Vec<f64> = (0..j).map(|_| prng.random::<f64>()).collect();
            starts.push(simplex::project(&raw));
        }

        let pg_opts = simplex::PgOptions {
            max_iter: opts.max_iter,
            tol: opts.tol,
            initial_step: 1.0,
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut trace = Vec::with_capacity(starts.len());
        let mut any_converged = false;
        for start in &starts {
            let res = simplex::minimize(|w| self.ratio_grad(w), start, &pg_opts);
            any_converged |= res.converged;
            let initial_r2 = 1.0 - res.trace[0];
            let final_r2 = 1.0 - res.value;
            trace.push(StartTrace {
                start: start.clone(),
                initial_r2,
                final_r2,
                iterations: res.iterations,
            });
            if best.as_ref().is_none_or(|(q, _)| res.value < *q) {
                best = Some((res.value, res.x));
            }
        }
        if !any_converged {
            return Err(Error::OptimizerFailure(
                "no outcome-weight start converged".into(),
            ));
        }
        let (_, omega) = best.unwrap();
        let r2 = self.r2(&omega)?;
        Ok(WeightSearchResult { omega: SimplexWeights::new(omega)?, r2_at_omega: r2, trace })
    }
}

fn quad(m: &Mat, w: &[f64]) -> f64 {
    dot(w, &m.mul_vec(w))
}

/// Build the quadratic objective from per-fold per-outcome ensembles trained
/// on each fold's training sample.
pub fn objective_from_fold_fits(
    fold_fits: &[Vec<FittedEnsemble>],
    data: &Dataset,
    folds: &FoldAssignment,
) -> Result<WeightObjective> {
    let k = folds.k();
    let j = data.n_outcomes();
    if fold_fits.len() != k {
        return Err(Error::Config(format!(
            "expected {k} folds of fits, got {}",
            fold_fits.len()
        )));
    }
    let n = folds.n();
    let mut predictions = Mat::zeros(n, j);
    let mut row_fold = vec![0usize; n];
    for fold in 0..k {
        let fits = &fold_fits[fold];
        if fits.len() != j {
            return Err(Error::Config(format!(
                "fold {fold}: expected {j} outcome fits, got {}",
                fits.len()
            )));
        }
        let val = folds.validation_set(fold);
        for (jj, ensemble) in fits.iter().enumerate() {
            let preds = ensemble.predict_rows(data.covariates(), &val)?;
            for (&i, &p) in val.iter().zip(&preds) {
                predictions[(i, jj)] = p;
                row_fold[i] = fold;
            }
        }
    }
    Ok(WeightObjective::from_out_of_fold(&predictions, data.outcomes(), &row_fold, k))
}

/// Cross-validated nonparametric R² of the composite super learner at a
/// given ω: out-of-fold composite MSE over in-sample composite-mean MSE.
pub fn composite_cv_r2(
    omega: &SimplexWeights,
    fold_fits: &[Vec<FittedEnsemble>],
    data: &Dataset,
    folds: &FoldAssignment,
) -> Result<f64> {
    let objective = objective_from_fold_fits(fold_fits, data, folds)?;
    objective.r2(omega.as_slice())
}

/// Maximize the cross-validated composite R² over the outcome simplex.
pub fn optimize_omega(
    fold_fits: &[Vec<FittedEnsemble>],
    data: &Dataset,
    folds: &FoldAssignment,
    opts: &OmegaOptions,
) -> Result<WeightSearchResult> {
    let objective = objective_from_fold_fits(fold_fits, data, folds)?;
    objective.maximize(opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_folds;
    use crate::learners::{LearnerKind, LearnerSpec};
    use crate::superlearner::fit_super_learner;

    fn fit_fold_ensembles(
        specs: &[LearnerSpec],
        data: &Dataset,
        folds: &FoldAssignment,
        k_star: usize,
        seed: u64,
    ) -> Vec<Vec<FittedEnsemble>> {
        (0..folds.k())
            .map(|k| {
                let train = folds.training_set(k);
                (0..data.n_outcomes())
                    .map(|j| {
                        fit_super_learner(specs, data, j, k_star, &train, seed + k as u64, None)
                            .unwrap()
                    })
                    .collect()
            })
            .collect()
    }

    fn two_outcome_dataset(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut prng = rng::seeded(seed);
        let xv: Vec<f64> = (0..n).map(|_| prng.random::<f64>() * 4.0).collect();
        let mut y = Mat::zeros(n, 2);
        for (r, &x) in xv.iter().enumerate() {
            y[(r, 0)] = 2.0 * x + rng::std_normal(&mut prng);
            y[(r, 1)] = rng::std_normal(&mut prng) * 2.0;
        }
        Dataset::new(
            Mat::from_vec(n, 1, xv),
            y,
            vec!["x".into()],
            vec!["y1".into(), "y2".into()],
        )
        .unwrap()
    }

    #[test]
    fn single_outcome_reduces_to_univariate_r2() {
        let d = two_outcome_dataset(120, 1);
        let y1 = d.outcome(0);
        let d1 = Dataset::new(
            d.covariates().clone(),
            Mat::from_vec(d.n(), 1, y1),
            vec!["x".into()],
            vec!["y1".into()],
        )
        .unwrap();
        let folds = make_folds(d1.n(), 4, 3).unwrap();
        let specs = vec![
            LearnerSpec::new(LearnerKind::InterceptOnly),
            LearnerSpec::new(LearnerKind::OlsMainTerms),
        ];
        let fits = fit_fold_ensembles(&specs, &d1, &folds, 3, 5);
        let omega = SimplexWeights::vertex(1, 0);
        let composite = composite_cv_r2(&omega, &fits, &d1, &folds).unwrap();

        // univariate R² computed directly from the same ensembles
        let y = d1.outcome(0);
        let mut model = 0.0;
        for k in 0..folds.k() {
            let val = folds.validation_set(k);
            let preds = fits[k][0].predict_rows(d1.covariates(), &val).unwrap();
            let mse: f64 = val
                .iter()
                .zip(&preds)
                .map(|(&i, &p)| (y[i] - p) * (y[i] - p))
                .sum::<f64>()
                / val.len() as f64;
            model += mse / folds.k() as f64;
        }
        let mean = crate::stats::mean(&y);
        let null: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64;
        let direct = 1.0 - model / null;
        assert!((composite - direct).abs() < 1e-12);

        let opt = optimize_omega(&fits, &d1, &folds, &OmegaOptions::default()).unwrap();
        assert_eq!(opt.omega.as_slice(), &[1.0]);
        assert!((opt.r2_at_omega - direct).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_fits_never_beat_the_null() {
        let d = two_outcome_dataset(100, 7);
        let folds = make_folds(d.n(), 4, 2).unwrap();
        let specs = vec![LearnerSpec::new(LearnerKind::InterceptOnly)];
        let fits = fit_fold_ensembles(&specs, &d, &folds, 3, 5);
        for omega in [
            SimplexWeights::uniform(2),
            SimplexWeights::vertex(2, 0),
            SimplexWeights::vertex(2, 1),
            SimplexWeights::new(vec![0.3, 0.7]).unwrap(),
        ] {
            let r2 = composite_cv_r2(&omega, &fits, &d, &folds).unwrap();
            assert!(r2 <= 0.0, "null model beat the in-sample mean: {r2}");
        }
    }

    #[test]
    fn optimizer_matches_grid_search_for_two_outcomes() {
        // 0.005-step grid oracle over ω₁ ∈ [0, 1]
        for seed in [11u64, 29, 47] {
            let d = two_outcome_dataset(150, seed);
            let folds = make_folds(d.n(), 5, seed).unwrap();
            let specs = vec![
                LearnerSpec::new(LearnerKind::InterceptOnly),
                LearnerSpec::new(LearnerKind::OlsMainTerms),
            ];
            let fits = fit_fold_ensembles(&specs, &d, &folds, 4, seed);
            let opt = optimize_omega(&fits, &d, &folds, &OmegaOptions::default()).unwrap();
            let mut grid_best = f64::NEG_INFINITY;
            for step in 0..=200 {
                let w1 = step as f64 / 200.0;
                let omega = SimplexWeights::new(vec![w1, 1.0 - w1]).unwrap();
                let r2 = composite_cv_r2(&omega, &fits, &d, &folds).unwrap();
                grid_best = grid_best.max(r2);
            }
            assert!(
                opt.r2_at_omega >= grid_best - 1e-3,
                "seed {seed}: optimizer {} vs grid {grid_best}",
                opt.r2_at_omega
            );
        }
    }

    #[test]
    fn objective_value_is_invariant_to_outcome_relabeling() {
        let d = two_outcome_dataset(120, 3);
        let folds = make_folds(d.n(), 4, 9).unwrap();
        let specs = vec![
            LearnerSpec::new(LearnerKind::InterceptOnly),
            LearnerSpec::new(LearnerKind::OlsMainTerms),
        ];
        let fits = fit_fold_ensembles(&specs, &d, &folds, 3, 5);

        // swap outcomes and their fold fits together
        let mut y_swapped = Mat::zeros(d.n(), 2);
        for r in 0..d.n() {
            y_swapped[(r, 0)] = d.outcomes()[(r, 1)];
            y_swapped[(r, 1)] = d.outcomes()[(r, 0)];
        }
        let d_swapped = Dataset::new(
            d.covariates().clone(),
            y_swapped,
            vec!["x".into()],
            vec!["y2".into(), "y1".into()],
        )
        .unwrap();
        let fits_swapped: Vec<Vec<FittedEnsemble>> = fits
            .iter()
            .map(|per_outcome| {
                let mut sw = per_outcome.clone();
                sw.swap(0, 1);
                sw
            })
            .collect();

        let omega = SimplexWeights::new(vec![0.7, 0.3]).unwrap();
        let omega_swapped = SimplexWeights::new(vec![0.3, 0.7]).unwrap();
        let a = composite_cv_r2(&omega, &fits, &d, &folds).unwrap();
        let b = composite_cv_r2(&omega_swapped, &fits_swapped, &d_swapped, &folds).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");

        let opt_a = optimize_omega(&fits, &d, &folds, &OmegaOptions::default()).unwrap();
        let opt_b =
            optimize_omega(&fits_swapped, &d_swapped, &folds, &OmegaOptions::default()).unwrap();
        assert!((opt_a.r2_at_omega - opt_b.r2_at_omega).abs() < 1e-8);
    }

    #[test]
    fn search_result_improves_on_every_start() {
        let d = two_outcome_dataset(150, 31);
        let folds = make_folds(d.n(), 5, 1).unwrap();
        let specs = vec![
            LearnerSpec::new(LearnerKind::InterceptOnly),
            LearnerSpec::new(LearnerKind::OlsMainTerms),
        ];
        let fits = fit_fold_ensembles(&specs, &d, &folds, 4, 2);
        let opts = OmegaOptions { extra_starts: 3, ..Default::default() };
        let result = optimize_omega(&fits, &d, &folds, &opts).unwrap();
        for t in &result.trace {
            assert!(
                result.r2_at_omega >= t.initial_r2 - 1e-12,
                "best {} below a start at {}",
                result.r2_at_omega,
                t.initial_r2
            );
        }
    }
}
