//! Replicate runs on simulated data and hyperparameter sensitivity grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainArchive};
use crate::metrics::{adjusted_rand_index, gamma_accuracy, mean_over_periods, mse_smooth, variation_of_information};
use crate::model::{default_hyperparameters, Hyperparameters, McmcSettings, PanelDataset, Variant};
use crate::sim::{generate_scenario1, generate_scenario2, ScenarioTruth};
use crate::summary::{cluster_sizes, estimate_partition, posterior_smooth, waic, SalsoScope, SalsoSettings, Waic};

/// Scores of one fitted chain against the simulation truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub variant: Variant,
    pub vi: f64,
    pub ari: f64,
    pub mse: f64,
    pub gamma_accuracy: Option<f64>,
    pub waic: f64,
    /// Distinct clusters in the point estimate.
    pub n_clusters: usize,
}

/// Point-estimate the partition and score it, the smooth functions and
/// the fixed flags. VI and ARI are averaged over periods.
pub fn evaluate(archive: &ChainArchive, truth: &ScenarioTruth, salso: SalsoSettings) -> Result<Evaluation> {
    check_truth_shape(archive, truth)?;
    let est = estimate_partition(archive, SalsoScope::for_variant(archive.meta.variant), salso)?;
    evaluate_estimate(archive, truth, &est)
}

pub fn check_truth_shape(archive: &ChainArchive, truth: &ScenarioTruth) -> Result<()> {
    let meta = &archive.meta;
    if meta.n != truth.n || meta.periods != truth.periods || truth.functions.len() != truth.n * truth.periods {
        return Err(Error::arg(format!(
            "truth is {}x{} but the chain is {}x{}",
            truth.n, truth.periods, meta.n, meta.periods
        )));
    }
    Ok(())
}

/// Score a given period-major point estimate.
pub fn evaluate_estimate(archive: &ChainArchive, truth: &ScenarioTruth, est: &[u32]) -> Result<Evaluation> {
    check_truth_shape(archive, truth)?;
    let meta = &archive.meta;
    let times: Vec<Vec<f64>> =
        truth.times.iter().map(|ts| ts.iter().map(|&t| meta.time_map.to_internal(t)).collect()).collect();
    let smooth = posterior_smooth(archive, &times)?;
    let w: Waic = waic(archive, meta.hyper.waic_fraction)?;
    let mut distinct = est.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let truth_labels = truth_labels(truth);
    Ok(Evaluation {
        variant: meta.variant,
        vi: mean_over_periods(est, &truth_labels, meta.n, variation_of_information)?,
        ari: mean_over_periods(est, &truth_labels, meta.n, adjusted_rand_index)?,
        mse: mse_smooth(&smooth, &truth.smooth)?,
        gamma_accuracy: if meta.variant.is_temporal() { Some(gamma_accuracy(archive, &truth.gamma)?) } else { None },
        waic: w.waic,
        n_clusters: distinct.len(),
    })
}

fn truth_labels(truth: &ScenarioTruth) -> Vec<u32> {
    truth.functions.iter().map(|&f| u32::from(f)).collect()
}

/// One simulated replicate fitted with one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub scenario: u8,
    pub seed: u64,
    pub mu_eta: Option<f64>,
    pub variant: Variant,
    pub mcmc: McmcSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub job: Job,
    pub evaluation: Evaluation,
}

/// Chain seed for a replicate, kept apart from the generator's streams.
pub fn chain_seed(data_seed: u64) -> u64 {
    data_seed ^ 0x5eed_c4a1_0000_0000
}

pub fn simulate(scenario: u8, seed: u64, mu_eta: Option<f64>) -> Result<(PanelDataset, ScenarioTruth)> {
    match (scenario, mu_eta) {
        (1, None) => generate_scenario1(seed),
        (1, Some(_)) => Err(Error::arg("scenario 1 takes no mu_eta")),
        (2, Some(mu)) if mu.is_finite() => generate_scenario2(seed, mu),
        (2, _) => Err(Error::arg("scenario 2 needs a finite mu_eta")),
        (s, _) => Err(Error::arg(format!("unknown scenario {s}"))),
    }
}

pub fn run_job(job: &Job) -> Result<JobResult> {
    let (data, truth) = simulate(job.scenario, job.seed, job.mu_eta)?;
    let mut hyper = default_hyperparameters(job.variant);
    hyper.mcmc = job.mcmc.clone();
    let archive = run_chain(&data, &hyper)?;
    let evaluation = evaluate(&archive, &truth, SalsoSettings::default())?;
    Ok(JobResult { job: job.clone(), evaluation })
}

/// Worker count from `HTRPM_WORKERS`, else the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var("HTRPM_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(k),
            _ => Err(Error::arg(format!("HTRPM_WORKERS must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |k| k.get())),
    }
}

/// Run `f` over `items` on a pool of `workers` threads, keeping order.
pub fn par_map<T, U, F>(items: &[T], workers: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::arg(e.to_string()))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

pub fn run_jobs(jobs: &[Job], workers: usize) -> Result<Vec<JobResult>> {
    par_map(jobs, workers, run_job)
}

/// Mean and standard deviation of a metric.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = crate::stats::mean(values);
    let sd = if values.len() > 1 { crate::stats::variance(values).sqrt() } else { 0.0 };
    (m, sd)
}

/// One cell of a concentration sensitivity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub alpha0: Option<f64>,
    pub alpha: f64,
    pub n_clusters: usize,
    /// Sizes of the estimated clusters over all cells, largest first.
    pub sizes: Vec<usize>,
    pub waic: f64,
}

/// Fit `data` for every `(alpha0, alpha)` pair and summarize each fit.
/// `alpha0` is ignored by flat variants.
pub fn sensitivity_grid(
    data: &PanelDataset,
    base: &Hyperparameters,
    alpha0s: &[f64],
    alphas: &[f64],
    workers: usize,
) -> Result<Vec<SensitivityRow>> {
    let a0: Vec<Option<f64>> =
        if base.variant.is_hierarchical() { alpha0s.iter().map(|&a| Some(a)).collect() } else { vec![None] };
    let cells: Vec<(Option<f64>, f64)> = a0.iter().flat_map(|&x| alphas.iter().map(move |&a| (x, a))).collect();
    par_map(&cells, workers, |&(alpha0, alpha)| {
        let mut hyper = base.clone();
        hyper.alpha = alpha;
        hyper.alpha0 = alpha0;
        let archive = run_chain(data, &hyper)?;
        let est = estimate_partition(&archive, SalsoScope::for_variant(hyper.variant), SalsoSettings::default())?;
        let mut totals = std::collections::BTreeMap::new();
        for period in cluster_sizes(&est, data.n) {
            for (l, s) in period {
                *totals.entry(l).or_insert(0usize) += s;
            }
        }
        let mut sizes: Vec<usize> = totals.into_values().collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        Ok(SensitivityRow { alpha0, alpha, n_clusters: sizes.len(), sizes, waic: waic(&archive, hyper.waic_fraction)?.waic })
    })
}
