//! Command implementations: analyze, importance, baselines, and the Monte
//! Carlo studies, each writing a JSON report (plus CSV tables) into the
//! output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mvassoc::association::{estimate_association, fit_outcome_weights, test_null};
use mvassoc::baselines::{self, CcaStatKind};
use mvassoc::data::Dataset;
use mvassoc::importance::{estimate_importance_many, ImportanceConfig, ImportanceEstimate};
use mvassoc::report::{AnalysisReport, BaselinesSection, WeightsSection};
use mvassoc::simulation::{
    run_sim1_bias_coverage, run_sim1_importance, run_sim2_power, McSettings, Scenario,
};
use mvassoc::superlearner::plan_fits;
use mvassoc::Error;

use crate::config::AnalysisConfig;
use crate::ingest;

pub fn ensure_out_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serializing report: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_csv_rows(path: &Path, header: &str, rows: &[String]) -> Result<(), Error> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

fn load_dataset(cfg: &AnalysisConfig) -> Result<Dataset, Error> {
    let data_path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no data file configured (use --data)".into()))?;
    ingest::load_csv(data_path, &cfg.outcomes, cfg.covariates.as_deref())
}

fn run_baselines_on(
    data: &Dataset,
    which: &[String],
    permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<BaselinesSection, Error> {
    let wanted_cca: Vec<CcaStatKind> = which
        .iter()
        .filter_map(|name| CcaStatKind::from_name(name))
        .collect();
    let permutation_tests = if wanted_cca.is_empty() {
        Vec::new()
    } else {
        baselines::permutation_test_all(data.covariates(), data.outcomes(), permutations, seed)?
            .into_iter()
            .filter(|r| wanted_cca.contains(&r.statistic))
            .collect()
    };
    let pca_f_test = if which.iter().any(|b| b == "pca-f") {
        Some(baselines::pca_f_test(data.covariates(), data.outcomes(), alpha)?)
    } else {
        None
    };
    Ok(BaselinesSection { permutation_tests, pca_f_test })
}

fn importance_for_groups(
    cfg: &AnalysisConfig,
    data: &Dataset,
) -> Result<Vec<(String, ImportanceEstimate)>, Error> {
    let groups = cfg.group_indices(data.covariate_names())?;
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    let idx: Vec<Vec<usize>> = groups.iter().map(|(_, g)| g.clone()).collect();
    let imp_cfg = ImportanceConfig { assoc: cfg.assoc_config(), covariance_aware: true };
    let estimates = estimate_importance_many(&cfg.learners, data, &idx, &imp_cfg)?;
    Ok(groups.into_iter().map(|(label, _)| label).zip(estimates).collect())
}

/// `analyze`: association estimate, full-data weights, optional importance
/// groups and baselines; writes report.json and per_fold.csv.
pub fn run_analyze(cfg: &AnalysisConfig, out_dir: &Path, with_importance: bool) -> Result<(), Error> {
    cfg.validate()?;
    ensure_out_dir(out_dir)?;
    let data = load_dataset(cfg)?;

    let est = estimate_association(&cfg.learners, &data, &cfg.assoc_config())?;
    let decision = test_null(&est, cfg.alpha);
    let weights = fit_outcome_weights(&cfg.learners, &data, &cfg.assoc_config())?;

    let importance = if with_importance || !cfg.groups.is_empty() {
        importance_for_groups(cfg, &data)?
    } else {
        Vec::new()
    };

    let baselines_section = if cfg.baselines.is_empty() {
        None
    } else {
        Some(run_baselines_on(&data, &cfg.baselines, cfg.permutations, cfg.alpha, cfg.seed)?)
    };

    let m_total = cfg.learners.len() * data.n_outcomes();
    let planned = plan_fits(cfg.folds.outer, m_total, cfg.reuse)?;
    let fold_rows: Vec<String> = est
        .per_fold
        .iter()
        .map(|f| {
            format!(
                "{},{},{},{},{},\"{}\"",
                f.fold,
                f.n_validation,
                f.mse_model,
                f.mse_null,
                f.omega_r2,
                f.omega.iter().map(|w| format!("{w:.6}")).collect::<Vec<_>>().join(";")
            )
        })
        .collect();

    let report = AnalysisReport {
        config: cfg.clone(),
        seed: cfg.seed,
        association: est,
        test: decision,
        full_data_weights: WeightsSection::from_search(&weights),
        importance: importance.into_iter().map(|(_, e)| e).collect(),
        baselines: baselines_section,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    write_csv_rows(
        &out_dir.join("per_fold.csv"),
        "fold,n_validation,mse_model,mse_null,omega_r2,omega",
        &fold_rows,
    )?;

    let r2 = report.association.r2;
    // with reuse the formula counts every distinct fit; without it, the
    // cross-validation fits
    let instrumented = if cfg.reuse {
        report.association.fit_counts.total()
    } else {
        report.association.fit_counts.cv_fits
    };
    println!(
        "r2 = {:.4}  ci = ({:.4}, {:.4})  p = {:.3e}  fits: cv {} + ensemble {} \
         (formula: {planned}, instrumented: {instrumented})",
        r2,
        report.association.ci_lower,
        report.association.ci_upper,
        report.association.p_value,
        report.association.fit_counts.cv_fits,
        report.association.fit_counts.ensemble_fits,
    );
    if report.full_data_weights.no_meaningful_association {
        println!(
            "note: the maximized cross-validated R² is not positive; \
             there is likely no meaningful association"
        );
    }
    println!("report written to {}", out_dir.join("report.json").display());
    Ok(())
}

/// `baselines`: only the comparator tests.
pub fn run_baselines(cfg: &AnalysisConfig, out_dir: &Path) -> Result<(), Error> {
    cfg.validate()?;
    ensure_out_dir(out_dir)?;
    let data = load_dataset(cfg)?;
    let which = if cfg.baselines.is_empty() {
        vec![
            "wilks".to_string(),
            "hotelling-lawley".to_string(),
            "pillai-bartlett".to_string(),
            "roy".to_string(),
            "pca-f".to_string(),
        ]
    } else {
        cfg.baselines.clone()
    };
    let section = run_baselines_on(&data, &which, cfg.permutations, cfg.alpha, cfg.seed)?;
    #[derive(serde::Serialize)]
    struct BaselinesReport<'a> {
        config: &'a AnalysisConfig,
        seed: u64,
        baselines: BaselinesSection,
    }
    let report = BaselinesReport { config: cfg, seed: cfg.seed, baselines: section };
    write_json(&out_dir.join("baselines.json"), &report)?;
    for p in &report.baselines.permutation_tests {
        println!("{:<18} statistic = {:>12.6}  p = {:.4}", p.statistic.name(), p.observed, p.p_value);
    }
    if let Some(pca) = &report.baselines.pca_f_test {
        println!("{:<18} statistic = {:>12.6}  p = {:.4}", "pca-f", pca.f_statistic, pca.p_value);
    }
    println!("report written to {}", out_dir.join("baselines.json").display());
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SimulateArgs {
    pub study: String,
    pub scenario: Option<String>,
    pub settings: McSettings,
    pub full: bool,
}

/// `simulate`: run a Monte Carlo study, emitting a per-replicate CSV and a
/// summary JSON per sample size.
pub fn run_simulate(args: &SimulateArgs, out_dir: &Path) -> Result<(), Error> {
    ensure_out_dir(out_dir)?;
    let n_grid: Vec<usize> = if args.full {
        match args.study.as_str() {
            "sim2-power" => vec![100, 500, 1000],
            _ => vec![100, 500, 1000, 5000],
        }
    } else {
        vec![args.settings.n]
    };
    let reps = if args.full { 1000 } else { args.settings.reps };

    for &n in &n_grid {
        let settings = McSettings { n, reps, ..args.settings.clone() };
        match args.study.as_str() {
            "sim1-bias-coverage" => {
                let report = run_sim1_bias_coverage(&settings)?;
                let stem = format!("sim1_bias_coverage_n{n}");
                write_json(&out_dir.join(format!("{stem}.json")), &report)?;
                let rows: Vec<String> = report
                    .rows
                    .iter()
                    .map(|r| {
                        format!(
                            "{},{},{},{},{},{},{},{}",
                            r.rep,
                            r.r2,
                            r.log_ratio,
                            r.se_log_ratio,
                            r.ci_lower,
                            r.ci_upper,
                            u8::from(r.covered_oracle),
                            u8::from(r.reject_null)
                        )
                    })
                    .collect();
                write_csv_rows(
                    &out_dir.join(format!("{stem}.csv")),
                    "rep,r2,log_ratio,se_log_ratio,ci_lower,ci_upper,covered_oracle,reject_null",
                    &rows,
                )?;
                println!(
                    "n = {n}: mean r2 = {:.4} (oracle {:.4}), coverage = {:.3}",
                    report.summary.mean_r2, report.summary.oracle_r2, report.summary.coverage
                );
            }
            "sim1-importance" => {
                let report = run_sim1_importance(&settings)?;
                let stem = format!("sim1_importance_n{n}");
                write_json(&out_dir.join(format!("{stem}.json")), &report)?;
                let rows: Vec<String> = report
                    .rows
                    .iter()
                    .map(|r| {
                        format!(
                            "{},{},{},{},{},{},{}",
                            r.rep,
                            r.group,
                            r.delta,
                            r.ci_lower,
                            r.ci_upper,
                            u8::from(r.covered_oracle),
                            r.p_value
                        )
                    })
                    .collect();
                write_csv_rows(
                    &out_dir.join(format!("{stem}.csv")),
                    "rep,group,delta,ci_lower,ci_upper,covered_oracle,p_value",
                    &rows,
                )?;
                for g in &report.groups {
                    println!(
                        "n = {n}: group {} mean delta = {:.4} (oracle {:.4}), coverage = {:.3}",
                        g.group, g.mean_delta, g.oracle_delta, g.coverage
                    );
                }
            }
            "sim2-power" => {
                let scenario_name = args.scenario.as_deref().unwrap_or("null");
                let scenario = Scenario::from_name(scenario_name).ok_or_else(|| {
                    Error::Config(format!(
                        "unknown scenario '{scenario_name}' (expected null, linear, or nonlinear)"
                    ))
                })?;
                let report = run_sim2_power(scenario, &settings)?;
                let stem = format!("sim2_power_{scenario_name}_n{n}");
                write_json(&out_dir.join(format!("{stem}.json")), &report)?;
                let rows: Vec<String> = report
                    .rows
                    .iter()
                    .map(|r| {
                        format!(
                            "{},{},{},{},{},{},{},{}",
                            r.rep,
                            r.proposed_r2,
                            u8::from(r.proposed_reject),
                            u8::from(r.wilks_reject),
                            u8::from(r.hotelling_lawley_reject),
                            u8::from(r.pillai_bartlett_reject),
                            u8::from(r.roy_reject),
                            u8::from(r.pca_reject)
                        )
                    })
                    .collect();
                write_csv_rows(
                    &out_dir.join(format!("{stem}.csv")),
                    "rep,proposed_r2,proposed,wilks,hotelling_lawley,pillai_bartlett,roy,pca_f",
                    &rows,
                )?;
                println!(
                    "n = {n} {scenario_name}: proposed {:.3}, wilks {:.3}, hl {:.3}, pb {:.3}, roy {:.3}, pca {:.3}",
                    report.rates.proposed,
                    report.rates.wilks,
                    report.rates.hotelling_lawley,
                    report.rates.pillai_bartlett,
                    report.rates.roy,
                    report.rates.pca_f
                );
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown study '{other}' (expected sim1-bias-coverage, sim1-importance, \
                     or sim2-power)"
                )))
            }
        }
    }
    Ok(())
}

/// Generate a synthetic design-1 dataset as CSV (handy for trying `analyze`).
pub fn emit_dgp1(n: usize, seed: u64, path: &PathBuf) -> Result<(), Error> {
    let data = mvassoc::simulation::simulate_dgp1(n, seed);
    ingest::write_csv(&data, path)
}
