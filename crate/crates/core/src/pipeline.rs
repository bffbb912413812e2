//! The three-layer cross-validation scheduler. An outer K-fold layer
//! cross-validates the whole procedure; inside each outer training sample a
//! weight layer cross-validates per-outcome super learners to choose outcome
//! weights; each of those super learners runs its own inner cross-validation
//! for the stacking weights.
//!
//! Two fold layouts are supported. Under `Nested`, every layer draws its own
//! seeded partition of its parent's training sample. Under `Lattice`, all
//! layers reuse the master partition, so every training sample is the
//! complement of one, two, or three master folds; with `share_fits` on, a
//! fit keyed by its excluded-fold set is trained once and reused everywhere
//! it appears, which is what cuts the fit count to (K³ + 5K)/6 per learner.
//! An unshared lattice run trains the same fits per use (identical training
//! sets and seeds), so its results coincide with the shared run bit for bit.
//!
//! All fits are enumerated up front, executed in parallel, then assembled
//! per outer fold from the completed store; results do not depend on thread
//! scheduling.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{make_folds, Dataset, SimplexWeights};
use crate::error::{Error, Result};
use crate::learners::{fit_learner, LearnerSpec, Predictor};
use crate::linalg::Mat;
use crate::rng;
use crate::superlearner::{effective_beta, solve_beta_from, FitCounter, FitCounts};
use crate::weights::{WeightObjective, WeightSearchResult};
use crate::weights::OmegaOptions;

/// How the weight and inner layers derive their folds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldLayout {
    /// Independent seeded partitions at every layer.
    Nested,
    /// All layers reuse the master partition (K° = K−1, K* = K−2).
    Lattice,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub k_outer: usize,
    /// Weight-layer folds (Nested layout only; Lattice forces K−1).
    pub k_weight: usize,
    /// Inner stacking folds (Nested layout only; Lattice forces K−2).
    pub k_inner: usize,
    pub layout: FoldLayout,
    /// Train each distinct lattice fit once and share it across contexts.
    pub share_fits: bool,
    pub seed: u64,
    pub omega: OmegaOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_outer: 10,
            k_weight: 10,
            k_inner: 10,
            layout: FoldLayout::Nested,
            share_fits: false,
            seed: 0,
            omega: OmegaOptions::default(),
        }
    }
}

// seed-path tags for the layers
const TAG_MASTER: u64 = 0x6f75;
const TAG_WEIGHT: u64 = 0x7767;
const TAG_INNER: u64 = 0x696e;
const TAG_FIT: u64 = 0x6669;

/// One weight-layer fold inside an outer training sample.
#[derive(Clone, Debug)]
pub struct WeightFoldPlan {
    /// Validation rows of this weight fold (global indices).
    pub val: Vec<usize>,
    /// Training rows (parent training sample minus `val`).
    pub train: Arc<Vec<usize>>,
    /// Inner validation sets partitioning `train`.
    pub inner_vals: Vec<Vec<usize>>,
    /// Inner training sets (`train` minus each inner validation set).
    pub inner_trains: Vec<Arc<Vec<usize>>>,
    /// Master folds this training sample excludes (lattice layout).
    key: Option<(u32, u32)>,
    inner_keys: Vec<Option<(u32, u32, u32)>>,
}

#[derive(Clone, Debug)]
pub struct OuterFoldPlan {
    pub train: Arc<Vec<usize>>,
    pub val: Vec<usize>,
    pub weight_folds: Vec<WeightFoldPlan>,
    lattice: bool,
}

/// The complete fold structure of a run.
#[derive(Clone, Debug)]
pub struct FoldPlan {
    pub n: usize,
    pub k_outer: usize,
    pub outer: Vec<OuterFoldPlan>,
}

fn sorted_pair(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn sorted_triple(a: u32, b: u32, c: u32) -> (u32, u32, u32) {
    let mut v = [a, b, c];
    v.sort_unstable();
    (v[0], v[1], v[2])
}

fn complement(idx: &[usize], drop: &[usize], n: usize) -> Vec<usize> {
    let mut keep = vec![false; n];
    for &i in idx {
        keep[i] = true;
    }
    for &i in drop {
        keep[i] = false;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Partition `idx` into `k` near-equal validation sets with a seeded shuffle.
fn partition_indices(idx: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let local = make_folds(idx.len(), k, seed)?;
    Ok((0..k)
        .map(|fold| local.validation_set(fold).iter().map(|&r| idx[r]).collect())
        .collect())
}

/// Build the fold structure for a dataset of `n` rows.
pub fn build_plan(n: usize, cfg: &PipelineConfig) -> Result<FoldPlan> {
    let k = cfg.k_outer;
    if k < 2 || k > n {
        return Err(Error::BadFoldCount { k, n, reuse: false });
    }
    let lattice = cfg.layout == FoldLayout::Lattice;
    if lattice && k < 3 {
        return Err(Error::BadFoldCount { k, n, reuse: true });
    }
    if !lattice && (cfg.k_weight < 2 || cfg.k_inner < 2) {
        return Err(Error::BadFoldCount { k: cfg.k_weight.min(cfg.k_inner), n, reuse: false });
    }
    let master = make_folds(n, k, rng::derive(cfg.seed, &[TAG_MASTER]))?;
    let master_vals: Vec<Vec<usize>> = (0..k).map(|f| master.validation_set(f)).collect();
    let all: Vec<usize> = (0..n).collect();

    let mut outer = Vec::with_capacity(k);
    for ko in 0..k {
        let train = Arc::new(complement(&all, &master_vals[ko], n));
        let val = master_vals[ko].clone();
        let weight_folds: Vec<WeightFoldPlan> = if lattice {
            (0..k)
                .filter(|&kb| kb != ko)
                .map(|kb| {
                    let wtrain =
                        Arc::new(complement(&train, &master_vals[kb], n));
                    let inner_folds: Vec<usize> =
                        (0..k).filter(|&f| f != ko && f != kb).collect();
                    let inner_vals: Vec<Vec<usize>> =
                        inner_folds.iter().map(|&kc| master_vals[kc].clone()).collect();
                    let inner_trains: Vec<Arc<Vec<usize>>> = inner_folds
                        .iter()
                        .map(|&kc| Arc::new(complement(&wtrain, &master_vals[kc], n)))
                        .collect();
                    let inner_keys = inner_folds
                        .iter()
                        .map(|&kc| Some(sorted_triple(ko as u32, kb as u32, kc as u32)))
                        .collect();
                    WeightFoldPlan {
                        val: master_vals[kb].clone(),
                        train: wtrain,
                        inner_vals,
                        inner_trains,
                        key: Some(sorted_pair(ko as u32, kb as u32)),
                        inner_keys,
                    }
                })
                .collect()
        } else {
            let wsets = partition_indices(
                &train,
                cfg.k_weight,
                rng::derive(cfg.seed, &[TAG_WEIGHT, ko as u64]),
            )?;
            let mut folds = Vec::with_capacity(wsets.len());
            for (b, wval) in wsets.iter().enumerate() {
                let wtrain = Arc::new(complement(&train, wval, n));
                let inner_vals = partition_indices(
                    &wtrain,
                    cfg.k_inner,
                    rng::derive(cfg.seed, &[TAG_INNER, ko as u64, b as u64]),
                )?;
                let inner_trains: Vec<Arc<Vec<usize>>> = inner_vals
                    .iter()
                    .map(|iv| Arc::new(complement(&wtrain, iv, n)))
                    .collect();
                folds.push(WeightFoldPlan {
                    val: wval.clone(),
                    train: wtrain,
                    inner_keys: vec![None; inner_vals.len()],
                    inner_vals,
                    inner_trains,
                    key: None,
                });
            }
            folds
        };
        outer.push(OuterFoldPlan { train, val, weight_folds, lattice });
    }
    Ok(FoldPlan { n, k_outer: k, outer })
}

// Store identity of a fit. Lattice fits shared across contexts carry their
// excluded master folds; per-context fits carry layer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum FitKey {
    LatticeCv { outcome: u32, learner: u32, excluded: (u32, u32, u32) },
    LatticeMember { outcome: u32, learner: u32, excluded: (u32, u32) },
    LatticeOuter { outcome: u32, learner: u32, excluded: u32 },
    ContextCv { outcome: u32, learner: u32, ko: u32, b: u32, c: u32 },
    ContextMember { outcome: u32, learner: u32, ko: u32, b: u32 },
    ContextOuter { outcome: u32, learner: u32, ko: u32 },
}

// Seed tags for the randomness a fit consumes. In the lattice layout these
// derive from the excluded-fold identity regardless of sharing, so shared
// and unshared executions of the same fit are bitwise identical.
fn lattice_cv_tags(outcome: u32, learner: u32, e: (u32, u32, u32)) -> [u64; 6] {
    [1, outcome as u64, learner as u64, e.0 as u64, e.1 as u64, e.2 as u64]
}
fn lattice_member_tags(outcome: u32, learner: u32, e: (u32, u32)) -> [u64; 6] {
    [2, outcome as u64, learner as u64, e.0 as u64, e.1 as u64, 0]
}
fn lattice_outer_tags(outcome: u32, learner: u32, e: u32) -> [u64; 6] {
    [3, outcome as u64, learner as u64, e as u64, 0, 0]
}
fn context_cv_tags(outcome: u32, learner: u32, ko: u32, b: u32, c: u32) -> [u64; 6] {
    [4, outcome as u64, learner as u64, ko as u64, b as u64, c as u64]
}
fn context_member_tags(outcome: u32, learner: u32, ko: u32, b: u32) -> [u64; 6] {
    [5, outcome as u64, learner as u64, ko as u64, b as u64, 0]
}
fn context_outer_tags(outcome: u32, learner: u32, ko: u32) -> [u64; 6] {
    [6, outcome as u64, learner as u64, ko as u64, 0, 0]
}

struct FitTask {
    store_key: FitKey,
    seed_tags: [u64; 6],
    outcome: u32,
    learner: u32,
    is_cv: bool,
    train: Arc<Vec<usize>>,
}

/// Everything the association layer needs from one outer fold.
#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    /// Outcome weights fitted on this fold's training sample.
    pub omega: SimplexWeights,
    /// The weight-layer objective value at `omega` (training diagnostic).
    pub omega_r2: f64,
    /// Full outcome-weight search diagnostics.
    pub omega_search: WeightSearchResult,
    /// Outer-layer stacking weights per outcome (diagnostic).
    pub beta_per_outcome: Vec<Vec<f64>>,
    /// Validation rows this fold was scored on.
    pub val_idx: Vec<usize>,
    /// Per-validation-row squared errors of the composite super learner.
    pub sq_err_model: Vec<f64>,
    /// Per-validation-row squared errors of the training composite mean.
    pub sq_err_null: Vec<f64>,
    pub mse_model: f64,
    pub mse_null: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub folds: Vec<FoldResult>,
    pub fit_counts: FitCounts,
    pub n: usize,
    pub k_outer: usize,
}

fn enumerate_tasks(
    plan: &FoldPlan,
    n_outcomes: usize,
    n_learners: usize,
    share: bool,
) -> Vec<FitTask> {
    let mut tasks: Vec<FitTask> = Vec::new();
    let mut seen: std::collections::HashSet<FitKey> = std::collections::HashSet::new();
    for j in 0..n_outcomes as u32 {
        for m in 0..n_learners as u32 {
            for (ko, ofold) in plan.outer.iter().enumerate() {
                let ko = ko as u32;
                for (b, wfold) in ofold.weight_folds.iter().enumerate() {
                    let b = b as u32;
                    for (c, itrain) in wfold.inner_trains.iter().enumerate() {
                        let (store_key, seed_tags) = match wfold.inner_keys[c] {
                            Some(e) => {
                                let tags = lattice_cv_tags(j, m, e);
                                let key = if share {
                                    FitKey::LatticeCv { outcome: j, learner: m, excluded: e }
                                } else {
                                    FitKey::ContextCv { outcome: j, learner: m, ko, b, c: c as u32 }
                                };
                                (key, tags)
                            }
                            None => (
                                FitKey::ContextCv { outcome: j, learner: m, ko, b, c: c as u32 },
                                context_cv_tags(j, m, ko, b, c as u32),
                            ),
                        };
                        if seen.insert(store_key) {
                            tasks.push(FitTask {
                                store_key,
                                seed_tags,
                                outcome: j,
                                learner: m,
                                is_cv: true,
                                train: Arc::clone(itrain),
                            });
                        }
                    }
                    let (store_key, seed_tags) = match wfold.key {
                        Some(e) => {
                            let tags = lattice_member_tags(j, m, e);
                            let key = if share {
                                FitKey::LatticeMember { outcome: j, learner: m, excluded: e }
                            } else {
                                FitKey::ContextMember { outcome: j, learner: m, ko, b }
                            };
                            (key, tags)
                        }
                        None => (
                            FitKey::ContextMember { outcome: j, learner: m, ko, b },
                            context_member_tags(j, m, ko, b),
                        ),
                    };
                    if seen.insert(store_key) {
                        tasks.push(FitTask {
                            store_key,
                            seed_tags,
                            outcome: j,
                            learner: m,
                            is_cv: false,
                            train: Arc::clone(&wfold.train),
                        });
                    }
                }
                let (store_key, seed_tags) = if ofold.lattice {
                    let tags = lattice_outer_tags(j, m, ko);
                    let key = if share {
                        FitKey::LatticeOuter { outcome: j, learner: m, excluded: ko }
                    } else {
                        FitKey::ContextOuter { outcome: j, learner: m, ko }
                    };
                    (key, tags)
                } else {
                    (
                        FitKey::ContextOuter { outcome: j, learner: m, ko },
                        context_outer_tags(j, m, ko),
                    )
                };
                if seen.insert(store_key) {
                    tasks.push(FitTask {
                        store_key,
                        seed_tags,
                        outcome: j,
                        learner: m,
                        is_cv: false,
                        train: Arc::clone(&ofold.train),
                    });
                }
            }
        }
    }
    tasks
}

/// Fit counts the plan will incur, without executing anything.
pub fn planned_counts(
    plan: &FoldPlan,
    n_outcomes: usize,
    n_learners: usize,
    share: bool,
) -> FitCounts {
    let tasks = enumerate_tasks(plan, n_outcomes, n_learners, share);
    let cv = tasks.iter().filter(|t| t.is_cv).count() as u64;
    FitCounts { cv_fits: cv, ensemble_fits: tasks.len() as u64 - cv }
}

type FitStore = HashMap<FitKey, Predictor>;

/// Run the full three-layer pipeline on standardized data.
pub fn run_outer_cv(
    specs: &[LearnerSpec],
    data: &Dataset,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    if specs.is_empty() {
        return Err(Error::Config("learner library is empty".into()));
    }
    let plan = build_plan(data.n(), cfg)?;
    for ofold in &plan.outer {
        for wfold in &ofold.weight_folds {
            for itrain in &wfold.inner_trains {
                if itrain.len() < 2 {
                    return Err(Error::TooFewObservations {
                        detail: format!(
                            "an innermost training set has {} observations",
                            itrain.len()
                        ),
                    });
                }
            }
        }
    }
    let counter = FitCounter::new();
    let tasks = enumerate_tasks(&plan, data.n_outcomes(), specs.len(), cfg.share_fits);

    let fitted: Result<Vec<(FitKey, Predictor)>> = tasks
        .par_iter()
        .map(|task| {
            let mut tags = vec![TAG_FIT];
            tags.extend_from_slice(&task.seed_tags);
            let seed = rng::derive(cfg.seed, &tags);
            let predictor = fit_learner(
                &specs[task.learner as usize],
                data,
                task.outcome as usize,
                &task.train,
                seed,
            )?;
            if task.is_cv {
                counter.count_cv(1);
            } else {
                counter.count_ensemble(1);
            }
            Ok((task.store_key, predictor))
        })
        .collect();
    let store: FitStore = fitted?.into_iter().collect();

    let folds: Result<Vec<FoldResult>> = plan
        .outer
        .par_iter()
        .enumerate()
        .map(|(ko, ofold)| assemble_fold(ko, ofold, specs, data, cfg, &store))
        .collect();
    Ok(PipelineOutput {
        folds: folds?,
        fit_counts: counter.snapshot(),
        n: data.n(),
        k_outer: cfg.k_outer,
    })
}

fn assemble_fold(
    ko: usize,
    ofold: &OuterFoldPlan,
    specs: &[LearnerSpec],
    data: &Dataset,
    cfg: &PipelineConfig,
    store: &FitStore,
) -> Result<FoldResult> {
    let j_count = data.n_outcomes();
    let m_count = specs.len();
    let share = cfg.share_fits;
    let train = &ofold.train;
    let row_in_train: HashMap<usize, usize> =
        train.iter().enumerate().map(|(r, &i)| (i, r)).collect();
    let k_weight = ofold.weight_folds.len();
    let ko_u = ko as u32;

    let get = |key: FitKey| -> Result<&Predictor> {
        store.get(&key).ok_or_else(|| Error::Config(format!("missing fit {key:?}")))
    };
    let cv_key = |j: usize, m: usize, b: usize, c: usize, wfold: &WeightFoldPlan| -> FitKey {
        match (share, wfold.inner_keys[c]) {
            (true, Some(e)) => {
                FitKey::LatticeCv { outcome: j as u32, learner: m as u32, excluded: e }
            }
            _ => FitKey::ContextCv {
                outcome: j as u32,
                learner: m as u32,
                ko: ko_u,
                b: b as u32,
                c: c as u32,
            },
        }
    };
    let member_key = |j: usize, m: usize, b: usize, wfold: &WeightFoldPlan| -> FitKey {
        match (share, wfold.key) {
            (true, Some(e)) => {
                FitKey::LatticeMember { outcome: j as u32, learner: m as u32, excluded: e }
            }
            _ => FitKey::ContextMember {
                outcome: j as u32,
                learner: m as u32,
                ko: ko_u,
                b: b as u32,
            },
        }
    };
    let outer_key = |j: usize, m: usize| -> FitKey {
        if share && ofold.lattice {
            FitKey::LatticeOuter { outcome: j as u32, learner: m as u32, excluded: ko_u }
        } else {
            FitKey::ContextOuter { outcome: j as u32, learner: m as u32, ko: ko_u }
        }
    };

    // per-outcome out-of-fold composite predictions over the outer training
    // sample, plus the member-level matrix the outer stacking reuses
    let mut oof_composite = Mat::zeros(train.len(), j_count);
    let mut row_fold = vec![0usize; train.len()];
    let mut oof_members: Vec<Mat> =
        (0..j_count).map(|_| Mat::zeros(train.len(), m_count)).collect();

    for (b, wfold) in ofold.weight_folds.iter().enumerate() {
        let wtrain_rows: HashMap<usize, usize> =
            wfold.train.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        for j in 0..j_count {
            let y_col = data.outcome(j);
            let mut inner_oof = Mat::zeros(wfold.train.len(), m_count);
            for (c, ival) in wfold.inner_vals.iter().enumerate() {
                for m in 0..m_count {
                    let predictor = get(cv_key(j, m, b, c, wfold))?;
                    let preds = predictor.predict_rows(data.covariates(), ival)?;
                    for (&i, &p) in ival.iter().zip(&preds) {
                        inner_oof[(wtrain_rows[&i], m)] = p;
                    }
                }
            }
            let y_train: Vec<f64> = wfold.train.iter().map(|&i| y_col[i]).collect();
            let beta = solve_beta_from(&inner_oof, &y_train)?;
            let eff = effective_beta(&beta);

            // member predictions on this weight fold's validation rows feed
            // both the composite matrix and the outer stacking matrix
            for m in 0..m_count {
                let predictor = get(member_key(j, m, b, wfold))?;
                let preds = predictor.predict_rows(data.covariates(), &wfold.val)?;
                for (&i, &p) in wfold.val.iter().zip(&preds) {
                    let r = row_in_train[&i];
                    oof_members[j][(r, m)] = p;
                    if eff[m] > 0.0 {
                        oof_composite[(r, j)] += eff[m] * p;
                    }
                    row_fold[r] = b;
                }
            }
        }
    }

    // outcome weights from the weight layer
    let y_train_mat = data.outcomes().gather_rows(train);
    let objective =
        WeightObjective::from_out_of_fold(&oof_composite, &y_train_mat, &row_fold, k_weight);
    let omega_search = objective.maximize(&cfg.omega)?;
    let omega = omega_search.omega.clone();
    let omega_r2 = omega_search.r2_at_omega;

    // outer-layer super learner per outcome, stacked on the member matrix
    let mut beta_per_outcome = Vec::with_capacity(j_count);
    let mut val_pred = Mat::zeros(ofold.val.len(), j_count);
    for j in 0..j_count {
        let y_col = data.outcome(j);
        let y_train: Vec<f64> = train.iter().map(|&i| y_col[i]).collect();
        let beta = solve_beta_from(&oof_members[j], &y_train)?;
        let eff = effective_beta(&beta);
        for m in 0..m_count {
            if eff[m] <= 0.0 {
                continue;
            }
            let predictor = get(outer_key(j, m))?;
            let preds = predictor.predict_rows(data.covariates(), &ofold.val)?;
            for (r, &p) in preds.iter().enumerate() {
                val_pred[(r, j)] += eff[m] * p;
            }
        }
        beta_per_outcome.push(eff);
    }

    // composite evaluation on the held-out fold: the model against the
    // training-sample composite mean
    let omega_w = omega.as_slice();
    let train_means = y_train_mat.col_means();
    let null_value: f64 = omega_w.iter().zip(&train_means).map(|(w, m)| w * m).sum();
    let mut sq_err_model = Vec::with_capacity(ofold.val.len());
    let mut sq_err_null = Vec::with_capacity(ofold.val.len());
    for (r, &i) in ofold.val.iter().enumerate() {
        let y_row = data.outcomes().row(i);
        let y_comp: f64 = omega_w.iter().zip(y_row).map(|(w, y)| w * y).sum();
        let p_comp: f64 = omega_w.iter().zip(val_pred.row(r)).map(|(w, p)| w * p).sum();
        let em = y_comp - p_comp;
        let en = y_comp - null_value;
        sq_err_model.push(em * em);
        sq_err_null.push(en * en);
    }
    let nv = ofold.val.len() as f64;
    let mse_model = sq_err_model.iter().sum::<f64>() / nv;
    let mse_null = sq_err_null.iter().sum::<f64>() / nv;
    if mse_null <= 1e-12 {
        return Err(Error::DegenerateNull { mse_null });
    }

    Ok(FoldResult {
        fold: ko,
        omega,
        omega_r2,
        omega_search,
        beta_per_outcome,
        val_idx: ofold.val.clone(),
        sq_err_model,
        sq_err_null,
        mse_model,
        mse_null,
    })
}

/// The outcome-weight procedure applied to the full dataset, reported
/// alongside the cross-validated association estimate. Under the lattice
/// layout its fits coincide bitwise with the association run's member and
/// outer fits (same training sets and seeds).
pub fn full_data_weights(
    specs: &[LearnerSpec],
    data: &Dataset,
    cfg: &PipelineConfig,
) -> Result<WeightSearchResult> {
    let n = data.n();
    let j_count = data.n_outcomes();
    let m_count = specs.len();
    let lattice = cfg.layout == FoldLayout::Lattice;
    let all: Vec<usize> = (0..n).collect();
    let weight_sets: Vec<Vec<usize>> = if lattice {
        let master = make_folds(n, cfg.k_outer, rng::derive(cfg.seed, &[TAG_MASTER]))?;
        (0..cfg.k_outer).map(|f| master.validation_set(f)).collect()
    } else {
        partition_indices(&all, cfg.k_weight, rng::derive(cfg.seed, &[TAG_WEIGHT, u64::MAX]))?
    };
    let k_weight = weight_sets.len();

    let per_fold: Result<Vec<(Vec<usize>, Mat)>> = weight_sets
        .par_iter()
        .enumerate()
        .map(|(b, wval)| {
            let wtrain = complement(&all, wval, n);
            let wtrain_rows: HashMap<usize, usize> =
                wtrain.iter().enumerate().map(|(r, &i)| (i, r)).collect();
            let inner_sets: Vec<(Option<usize>, Vec<usize>)> = if lattice {
                weight_sets
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != b)
                    .map(|(c, v)| (Some(c), v.clone()))
                    .collect()
            } else {
                partition_indices(
                    &wtrain,
                    cfg.k_inner,
                    rng::derive(cfg.seed, &[TAG_INNER, u64::MAX, b as u64]),
                )?
                .into_iter()
                .map(|v| (None, v))
                .collect()
            };
            let mut fold_pred = Mat::zeros(wval.len(), j_count);
            for j in 0..j_count {
                let y_col = data.outcome(j);
                let mut inner_oof = Mat::zeros(wtrain.len(), m_count);
                for (ci, (master_c, ival)) in inner_sets.iter().enumerate() {
                    let itrain = complement(&wtrain, ival, n);
                    for m in 0..m_count {
                        let tags: [u64; 6] = match master_c {
                            Some(c) => lattice_member_tags(
                                j as u32,
                                m as u32,
                                sorted_pair(b as u32, *c as u32),
                            ),
                            None => [7, j as u64, m as u64, b as u64, ci as u64, 0],
                        };
                        let mut path = vec![TAG_FIT];
                        path.extend_from_slice(&tags);
                        let predictor = fit_learner(
                            &specs[m],
                            data,
                            j,
                            &itrain,
                            rng::derive(cfg.seed, &path),
                        )?;
                        let preds = predictor.predict_rows(data.covariates(), ival)?;
                        for (&i, &p) in ival.iter().zip(&preds) {
                            inner_oof[(wtrain_rows[&i], m)] = p;
                        }
                    }
                }
                let y_train: Vec<f64> = wtrain.iter().map(|&i| y_col[i]).collect();
                let beta = solve_beta_from(&inner_oof, &y_train)?;
                let eff = effective_beta(&beta);
                for m in 0..m_count {
                    if eff[m] <= 0.0 {
                        continue;
                    }
                    let tags: [u64; 6] = if lattice {
                        lattice_outer_tags(j as u32, m as u32, b as u32)
                    } else {
                        [8, j as u64, m as u64, b as u64, 0, 0]
                    };
                    let mut path = vec![TAG_FIT];
                    path.extend_from_slice(&tags);
                    let predictor =
                        fit_learner(&specs[m], data, j, &wtrain, rng::derive(cfg.seed, &path))?;
                    let preds = predictor.predict_rows(data.covariates(), wval)?;
                    for (r, &p) in preds.iter().enumerate() {
                        fold_pred[(r, j)] += eff[m] * p;
                    }
                }
            }
            Ok((wval.clone(), fold_pred))
        })
        .collect();

    let mut predictions = Mat::zeros(n, j_count);
    let mut row_fold = vec![0usize; n];
    for (b, (wval, fold_pred)) in per_fold?.into_iter().enumerate() {
        for (r, &i) in wval.iter().enumerate() {
            for j in 0..j_count {
                predictions[(i, j)] = fold_pred[(r, j)];
            }
            row_fold[i] = b;
        }
    }
    let objective =
        WeightObjective::from_out_of_fold(&predictions, data.outcomes(), &row_fold, k_weight);
    objective.maximize(&cfg.omega)
}
