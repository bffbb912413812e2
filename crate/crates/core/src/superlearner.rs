//! Per-outcome stacking: K*-fold cross-validated risks for a library of
//! candidate learners, simplex-constrained stacking weights, and the refit
//! convex ensemble. Also owns the fit-count planner and the instrumentation
//! counter that the three-layer pipeline reports against.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::{make_folds, Dataset, FoldAssignment, SimplexWeights};
use crate::error::{Error, Result};
use crate::learners::{fit_learner, LearnerSpec, Predictor};
use crate::linalg::{cholesky, dot, Mat};
use crate::rng;

/// Stacking weights below this threshold are dropped and the rest
/// renormalized before the ensemble members are refit.
pub const BETA_DROP: f64 = 1e-4;

/// Counts candidate-learner training invocations, split into cross-validation
/// fits (fits whose purpose is an out-of-fold risk evaluation) and ensemble
/// member fits (fits on a full working set that become part of a returned
/// ensemble).
#[derive(Debug, Default)]
pub struct FitCounter {
    cv_fits: AtomicU64,
    ensemble_fits: AtomicU64,
}

impl FitCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count_cv(&self, n: u64) {
        self.cv_fits.fetch_add(n, Ordering::Relaxed);
    }

    pub fn count_ensemble(&self, n: u64) {
        self.ensemble_fits.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> FitCounts {
        FitCounts {
            cv_fits: self.cv_fits.load(Ordering::Relaxed),
            ensemble_fits: self.ensemble_fits.load(Ordering::Relaxed),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitCounts {
    pub cv_fits: u64,
    pub ensemble_fits: u64,
}

impl FitCounts {
    pub fn total(&self) -> u64 {
        self.cv_fits + self.ensemble_fits
    }
}

/// Number of candidate-learner fits the three-layer pipeline performs for
/// `m_total` learner/outcome pairs with all layers at K folds.
///
/// Without fit reuse the pipeline's cross-validation fits number K³ per
/// learner. With reuse the layers are tied (K° = K−1, K* = K−2) so distinct
/// fits are indexed by which 1, 2, or 3 folds they exclude, giving
/// C(K,1) + C(K,2) + C(K,3) = (K³ + 5K)/6 per learner in total.
pub fn plan_fits(k: usize, m_total: usize, reuse: bool) -> Result<u64> {
    if k < 2 || (reuse && k < 3) {
        return Err(Error::BadFoldCount { k, n: usize::MAX, reuse });
    }
    let k = k as u64;
    let m = m_total as u64;
    Ok(if reuse {
        (k * k * k + 5 * k) / 6 * m
    } else {
        k * k * k * m
    })
}

/// Honest per-fold and averaged validation MSEs for each candidate learner.
#[derive(Clone, Debug)]
pub struct CvRiskTable {
    /// `per_fold[(m, k)]` is learner m's MSE on validation fold k.
    pub per_fold: Mat,
    /// Row means of `per_fold` (the unweighted average over folds).
    pub average: Vec<f64>,
}

/// Cross-validation output: the risk table plus the out-of-fold prediction
/// matrix the stacking weights are solved on.
#[derive(Clone, Debug)]
pub struct CvOutput {
    pub table: CvRiskTable,
    /// Out-of-fold predictions, one row per working observation (in
    /// `work_idx` order), one column per learner.
    pub oof: Mat,
    /// Outcome values aligned with `oof` rows.
    pub y: Vec<f64>,
    /// Working-set indices (into the dataset) aligned with `oof` rows.
    pub work_idx: Vec<usize>,
}

/// Cross-validated risks over an explicit list of validation index sets
/// (global indices). Fold k trains on the union of the other folds.
pub fn cv_risk_on(
    specs: &[LearnerSpec],
    data: &Dataset,
    outcome: usize,
    validation_sets: &[Vec<usize>],
    seed: u64,
    counter: Option<&FitCounter>,
) -> Result<CvOutput> {
    let k = validation_sets.len();
    if k < 2 {
        return Err(Error::BadFoldCount { k, n: data.n(), reuse: false });
    }
    let m = specs.len();
    let work_idx: Vec<usize> = {
        let mut all: Vec<usize> = validation_sets.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    };
    let row_of: std::collections::HashMap<usize, usize> =
        work_idx.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    let y_col = data.outcome(outcome);
    let y: Vec<f64> = work_idx.iter().map(|&i| y_col[i]).collect();

    let mut per_fold = Mat::zeros(m, k);
    let mut oof = Mat::zeros(work_idx.len(), m);
    for (fold, val) in validation_sets.iter().enumerate() {
        let train: Vec<usize> = {
            let mut t: Vec<usize> = validation_sets
                .iter()
                .enumerate()
                .filter(|&(f, _)| f != fold)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            t.sort_unstable();
            t
        };
        for (mi, spec) in specs.iter().enumerate() {
            let fit_seed = rng::derive(seed, &[outcome as u64, mi as u64, fold as u64]);
            let predictor =
                fit_learner(spec, data, outcome, &train, fit_seed).map_err(|e| {
                    Error::LearnerFit {
                        learner: spec.kind.name().into(),
                        outcome,
                        fold,
                        source: Box::new(e),
                    }
                })?;
            if let Some(c) = counter {
                c.count_cv(1);
            }
            let preds = predictor.predict_rows(data.covariates(), val)?;
            let mut sse = 0.0;
            for (&i, &p) in val.iter().zip(&preds) {
                let e = y_col[i] - p;
                sse += e * e;
                oof[(row_of[&i], mi)] = p;
            }
            per_fold[(mi, fold)] = sse / val.len() as f64;
        }
    }
    let average: Vec<f64> =
        (0..m).map(|mi| per_fold.row(mi).iter().sum::<f64>() / k as f64).collect();
    Ok(CvOutput { table: CvRiskTable { per_fold, average }, oof, y, work_idx })
}

/// Cross-validated risks over a [`FoldAssignment`] of the whole dataset.
pub fn cv_risk(
    specs: &[LearnerSpec],
    data: &Dataset,
    outcome: usize,
    folds: &FoldAssignment,
    seed: u64,
) -> Result<CvOutput> {
    let sets: Vec<Vec<usize>> = (0..folds.k()).map(|k| folds.validation_set(k)).collect();
    cv_risk_on(specs, data, outcome, &sets, seed, None)
}

/// Stacking weights: the simplex point minimizing the empirical MSE of the
/// out-of-fold prediction matrix against the outcome.
///
/// The convex QP is solved exactly by support enumeration on the (slightly
/// ridged) normal equations; the 1e-12 ridge breaks ties between duplicate
/// learners toward the uniform split. Libraries too large to enumerate fall
/// back to projected gradient from a non-negative least squares warm start.
pub fn solve_beta(cv: &CvOutput) -> Result<SimplexWeights> {
    solve_beta_from(&cv.oof, &cv.y)
}

/// As [`solve_beta`], from a raw out-of-fold prediction matrix.
pub fn solve_beta_from(oof: &Mat, y: &[f64]) -> Result<SimplexWeights> {
    let m = oof.cols();
    if m == 1 {
        return Ok(SimplexWeights::vertex(1, 0));
    }
    let g = oof.gram();
    let c = oof.tx_vec(y);

    // Learners with coinciding out-of-fold columns are interchangeable in the
    // objective; solve over one representative per group and split the
    // group's weight uniformly (the tie-break), which also keeps the ridged
    // system well away from exact singularity.
    let groups = duplicate_groups(&g);
    let reps: Vec<usize> = groups.iter().map(|grp| grp[0]).collect();
    let mr = reps.len();
    let mut gr = Mat::zeros(mr, mr);
    let mut cr = vec![0.0; mr];
    for (a, &i) in reps.iter().enumerate() {
        cr[a] = c[i];
        for (b, &j) in reps.iter().enumerate() {
            gr[(a, b)] = g[(i, j)];
        }
    }
    let trace: f64 = (0..mr).map(|i| gr[(i, i)]).sum();
    let ridge = 1e-12 * (trace / mr as f64).max(1.0);
    for i in 0..mr {
        gr[(i, i)] += ridge;
    }

    let beta_rep = if mr == 1 {
        vec![1.0]
    } else if mr <= 14 {
        solve_simplex_qp_exact(&gr, &cr)?
    } else {
        solve_simplex_qp_pg(&gr, &cr)
    };
    let mut beta = vec![0.0; m];
    for (grp, &w) in groups.iter().zip(&beta_rep) {
        for &i in grp {
            beta[i] = w / grp.len() as f64;
        }
    }
    let s: f64 = beta.iter().sum();
    beta.iter_mut().for_each(|b| *b /= s);
    SimplexWeights::new(beta)
}

// Partition column indices into groups whose out-of-fold predictions agree:
// ‖z_i − z_j‖² = g_ii + g_jj − 2 g_ij vanishes relative to the column scale.
fn duplicate_groups(g: &Mat) -> Vec<Vec<usize>> {
    let m = g.rows();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..m {
        let mut placed = false;
        for grp in groups.iter_mut() {
            let r = grp[0];
            let d2 = g[(i, i)] + g[(r, r)] - 2.0 * g[(i, r)];
            let scale = (g[(i, i)] + g[(r, r)]).max(1.0);
            if d2 <= 1e-10 * scale {
                grp.push(i);
                placed = true;
                break;
            }
        }
        if !placed {
            groups.push(vec![i]);
        }
    }
    groups
}

/// Empirical MSE of the stacked out-of-fold predictions under weights `beta`.
pub fn stack_objective(cv: &CvOutput, beta: &[f64]) -> f64 {
    let preds = cv.oof.mul_vec(beta);
    let mut sse = 0.0;
    for (p, y) in preds.iter().zip(&cv.y) {
        let e = y - p;
        sse += e * e;
    }
    sse / cv.y.len() as f64
}

// Exact solution of min βᵀGβ − 2cᵀβ subject to β ≥ 0, Σβ = 1, for positive
// definite G, by enumerating supports and checking KKT conditions.
fn solve_simplex_qp_exact(g: &Mat, c: &[f64]) -> Result<Vec<f64>> {
    let m = g.rows();
    let scale = (0..m).map(|i| g[(i, i)].abs()).fold(0.0f64, f64::max).max(1.0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for support in 1u32..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|&i| support >> i & 1 == 1).collect();
        let p = idx.len();
        let mut gs = Mat::zeros(p, p);
        let mut cs = vec![0.0; p];
        for (a, &i) in idx.iter().enumerate() {
            cs[a] = c[i];
            for (b, &j) in idx.iter().enumerate() {
                gs[(a, b)] = g[(i, j)];
            }
        }
        let Some(ch) = cholesky(&gs) else { continue };
        // β_S = u + λ v with u = G⁻¹c, v = G⁻¹1, λ chosen so Σβ = 1.
        // Iterative refinement recovers the digits the tiny tie-break ridge
        // costs on near-duplicate learners.
        let u = solve_refined(&ch, &gs, &cs);
        let v = solve_refined(&ch, &gs, &vec![1.0; p]);
        let sv: f64 = v.iter().sum();
        if sv.abs() < 1e-300 {
            continue;
        }
        let lambda = (1.0 - u.iter().sum::<f64>()) / sv;
        let beta_s: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + lambda * b).collect();
        if beta_s.iter().any(|&b| b < -1e-9) {
            continue;
        }
        // dual feasibility for the zero coordinates: 2(Gβ − c)_i − μ ≥ 0
        let mut beta = vec![0.0; m];
        for (&i, &b) in idx.iter().zip(&beta_s) {
            beta[i] = b.max(0.0);
        }
        let gb = g.mul_vec(&beta);
        let mu = 2.0 * lambda;
        let dual_ok = (0..m)
            .filter(|i| !idx.contains(i))
            .all(|i| 2.0 * (gb[i] - c[i]) - mu >= -1e-7 * scale);
        if !dual_ok {
            continue;
        }
        let s: f64 = beta.iter().sum();
        beta.iter_mut().for_each(|b| *b /= s);
        let obj = dot(&beta, &g.mul_vec(&beta)) - 2.0 * dot(c, &beta);
        if best.as_ref().is_none_or(|(bo, _)| obj < *bo) {
            best = Some((obj, beta));
        }
    }
    best.map(|(_, b)| b)
        .ok_or_else(|| Error::OptimizerFailure("no KKT point found for stacking QP".into()))
}

fn solve_refined(ch: &crate::linalg::Cholesky, a: &Mat, rhs: &[f64]) -> Vec<f64> {
    let mut x = ch.solve(rhs);
    for _ in 0..2 {
        let ax = a.mul_vec(&x);
        let residual: Vec<f64> = rhs.iter().zip(&ax).map(|(r, v)| r - v).collect();
        let correction = ch.solve(&residual);
        for (xi, ci) in x.iter_mut().zip(&correction) {
            *xi += ci;
        }
    }
    x
}

// Large-library fallback: non-negative least squares warm start, normalized,
// then monotone projected gradient on the simplex.
fn solve_simplex_qp_pg(g: &Mat, c: &[f64]) -> Vec<f64> {
    let m = g.rows();
    let nnls = nnls_gram(g, c);
    let total: f64 = nnls.iter().sum();
    let start: Vec<f64> = if total > 1e-12 {
        nnls.iter().map(|b| b / total).collect()
    } else {
        vec![1.0 / m as f64; m]
    };
    let f = |beta: &[f64]| {
        let gb = g.mul_vec(beta);
        let val = dot(beta, &gb) - 2.0 * dot(c, beta);
        let grad: Vec<f64> = gb.iter().zip(c).map(|(a, b)| 2.0 * (a - b)).collect();
        (val, grad)
    };
    let opts = crate::simplex::PgOptions { max_iter: 5000, tol: 1e-14, initial_step: 1.0 };
    let mut best = crate::simplex::minimize(f, &start, &opts);
    for vertex in 0..m {
        let mut s = vec![0.0; m];
        s[vertex] = 1.0;
        let r = crate::simplex::minimize(f, &s, &opts);
        if r.value < best.value {
            best = r;
        }
    }
    best.x
}

// Lawson-Hanson active set in normal-equation form.
fn nnls_gram(g: &Mat, c: &[f64]) -> Vec<f64> {
    let m = g.rows();
    let mut passive = vec![false; m];
    let mut beta = vec![0.0; m];
    let scale = (0..m).map(|i| g[(i, i)].abs()).fold(0.0f64, f64::max).max(1.0);
    for _outer in 0..(3 * m + 10) {
        let gb = g.mul_vec(&beta);
        let w: Vec<f64> = c.iter().zip(&gb).map(|(ci, gi)| ci - gi).collect();
        let mut cand: Option<(usize, f64)> = None;
        for i in 0..m {
            if !passive[i] && w[i] > 1e-12 * scale && cand.is_none_or(|(_, wv)| w[i] > wv) {
                cand = Some((i, w[i]));
            }
        }
        let Some((enter, _)) = cand else { break };
        passive[enter] = true;
        loop {
            let idx: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
            let p = idx.len();
            let mut gs = Mat::zeros(p, p);
            let mut cs = vec![0.0; p];
            for (a, &i) in idx.iter().enumerate() {
                cs[a] = c[i];
                for (b, &j) in idx.iter().enumerate() {
                    gs[(a, b)] = g[(i, j)];
                }
            }
            let s = match cholesky(&gs) {
                Some(ch) => ch.solve(&cs),
                None => crate::linalg::solve_gram_ridged(&gs, &cs, 1e-10),
            };
            if s.iter().all(|&x| x > 0.0) {
                beta.iter_mut().for_each(|b| *b = 0.0);
                for (&i, &x) in idx.iter().zip(&s) {
                    beta[i] = x;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &x) in idx.iter().zip(&s) {
                if x <= 0.0 {
                    let a = beta[i] / (beta[i] - x);
                    alpha = alpha.min(a);
                }
            }
            for (&i, &x) in idx.iter().zip(&s) {
                beta[i] += alpha * (x - beta[i]);
                if beta[i] <= 1e-14 {
                    beta[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    beta
}

/// A fitted convex combination of candidate learners for one outcome.
#[derive(Clone, Debug)]
pub struct FittedEnsemble {
    /// Weights over the full learner library (dropped learners at zero,
    /// remainder renormalized).
    pub beta: SimplexWeights,
    /// Fitted members aligned with the nonzero entries of `beta`.
    pub members: Vec<(usize, Predictor)>,
    pub outcome_index: usize,
}

impl FittedEnsemble {
    pub fn predict_rows(&self, x: &Mat, rows: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; rows.len()];
        for (mi, predictor) in &self.members {
            let w = self.beta.as_slice()[*mi];
            let preds = predictor.predict_rows(x, rows)?;
            for (o, p) in out.iter_mut().zip(&preds) {
                *o += w * p;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for (mi, predictor) in &self.members {
            v += self.beta.as_slice()[*mi] * predictor.predict(x)?;
        }
        Ok(v)
    }
}

/// Drop learners with weight below [`BETA_DROP`] and renormalize.
pub fn effective_beta(beta: &SimplexWeights) -> Vec<f64> {
    let mut b: Vec<f64> = beta.as_slice().to_vec();
    for x in b.iter_mut() {
        if *x < BETA_DROP {
            *x = 0.0;
        }
    }
    let s: f64 = b.iter().sum();
    if s <= 0.0 {
        // everything fell under the threshold: keep the single best weight
        let argmax = beta
            .as_slice()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        b.iter_mut().for_each(|x| *x = 0.0);
        b[argmax] = 1.0;
        return b;
    }
    b.iter_mut().for_each(|x| *x /= s);
    b
}

/// Build the ensemble for one outcome from stacking weights and member fits
/// trained on the full working set. `member_fits[m]` is only consulted when
/// learner m survives the weight threshold.
pub fn assemble_ensemble(
    outcome: usize,
    beta: &SimplexWeights,
    member_fits: &[Option<Predictor>],
) -> Result<FittedEnsemble> {
    let eff = effective_beta(beta);
    let mut members = Vec::new();
    for (mi, &w) in eff.iter().enumerate() {
        if w > 0.0 {
            let p = member_fits[mi].clone().ok_or_else(|| {
                Error::Config(format!("missing member fit for learner {mi}"))
            })?;
            members.push((mi, p));
        }
    }
    Ok(FittedEnsemble { beta: SimplexWeights::new(eff)?, members, outcome_index: outcome })
}

/// The full per-outcome super learner: partition the working set, fit and
/// evaluate every candidate, solve the stacking weights, and refit the
/// retained members on the whole working set.
pub fn fit_super_learner(
    specs: &[LearnerSpec],
    data: &Dataset,
    outcome: usize,
    k_star: usize,
    work_idx: &[usize],
    seed: u64,
    counter: Option<&FitCounter>,
) -> Result<FittedEnsemble> {
    if work_idx.len() < 2 * k_star {
        return Err(Error::TooFewObservations {
            detail: format!(
                "super learner needs at least 2 observations per fold: |work| = {}, K* = {k_star}",
                work_idx.len()
            ),
        });
    }
    let local = make_folds(work_idx.len(), k_star, rng::derive(seed, &[0x5354]))?;
    let validation_sets: Vec<Vec<usize>> = (0..k_star)
        .map(|k| local.validation_set(k).iter().map(|&r| work_idx[r]).collect())
        .collect();
    let cv = cv_risk_on(specs, data, outcome, &validation_sets, seed, counter)?;
    let beta = solve_beta(&cv)?;
    let eff = effective_beta(&beta);

    let mut member_fits: Vec<Option<Predictor>> = Vec::with_capacity(specs.len());
    for (mi, spec) in specs.iter().enumerate() {
        if eff[mi] > 0.0 {
            let fit_seed = rng::derive(seed, &[0x6d62, outcome as u64, mi as u64]);
            member_fits.push(Some(fit_learner(spec, data, outcome, work_idx, fit_seed)?));
            if let Some(c) = counter {
                c.count_ensemble(1);
            }
        } else {
            member_fits.push(None);
        }
    }
    assemble_ensemble(outcome, &beta, &member_fits)
}
