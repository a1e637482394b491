use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use htrpm::config::{apply_setting, parse_config, parse_override};
use htrpm::experiment::{
    chain_seed, evaluate_estimate, mean_sd, run_jobs, sensitivity_grid, simulate as simulate_one, worker_count, Job,
    JobResult,
};
use htrpm::gibbs::{fingerprint, fit_data, label_archive, CheckpointPolicy, Checkpoint};
use htrpm::io::{read_dataset, write_curves, write_dataset, write_partition, write_transitions};
use htrpm::sim::ScenarioTruth;
use htrpm::summary::{
    cluster_sizes, estimate_partition, trajectory_summary, transition_tables, waic, SalsoScope, SalsoSettings,
};
use htrpm::{default_hyperparameters, ChainArchive, Error, Hyperparameters, McmcSettings, Result, Sampler, Variant};
use serde::Serialize;

use crate::{ChainArgs, ExperimentArgs, FitArgs, SimulateArgs, SummarizeArgs, SweepArgs};

pub const ARCHIVE_FILE: &str = "chain.jsonl.gz";
pub const CHECKPOINT_FILE: &str = "checkpoint.cbor";
pub const MANIFEST_FILE: &str = "manifest.json";

/// 2 for bad input, 1 for failures while running.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidData(_)
        | Error::InvalidHyper(_)
        | Error::InvalidArgument(_)
        | Error::NotPositiveDefinite
        | Error::ResumeMismatch(_)
        | Error::Parse { .. } => 2,
        Error::Numeric { .. } | Error::Io(_) | Error::Serde(_) => 1,
    }
}

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_at(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_at(path, e))
}

/// CSV body prefixed by a `# fingerprint=` comment line.
fn write_stamped_csv(path: &Path, fp: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = format!("# fingerprint={fp}\n").into_bytes();
    body(&mut buf)?;
    fs::write(path, buf).map_err(|e| io_at(path, e))
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    if a.replicates == 0 {
        return Err(Error::InvalidArgument("--replicates must be at least 1".into()));
    }
    // validate flag combinations before touching the file system
    simulate_one(a.scenario, a.seed, a.mu_eta)?;
    create_dir(&a.out)?;
    let seeds: Vec<u64> = (0..a.replicates as u64).map(|r| a.seed + r).collect();
    let width = a.replicates.to_string().len().max(3);
    htrpm::experiment::par_map(&seeds, worker_count()?, |&seed| {
        let (data, truth) = simulate_one(a.scenario, seed, a.mu_eta)?;
        let dir = a.out.join(format!("rep{:0width$}", seed - a.seed + 1));
        create_dir(&dir)?;
        write_dataset(&dir.join("data.csv"), &data)?;
        write_json(&dir.join("truth.json"), &truth)
    })?;
    Ok(())
}

/// Variant defaults, then the config file, then `--set`, then flags.
fn hyperparameters(variant: Variant, c: &ChainArgs) -> Result<Hyperparameters> {
    let mut h = default_hyperparameters(variant);
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).map_err(|e| io_at(path, e))?;
        for (k, v) in parse_config(&text)? {
            apply_setting(&mut h, &k, &v)?;
        }
    }
    for s in &c.set {
        let (k, v) = parse_override(s)?;
        apply_setting(&mut h, &k, &v)?;
    }
    let m = &mut h.mcmc;
    m.iterations = c.iters.unwrap_or(m.iterations);
    m.burn_in = c.burnin.unwrap_or(m.burn_in);
    m.thin = c.thin.unwrap_or(m.thin);
    m.seed = c.seed.unwrap_or(m.seed);
    Ok(h)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    data: String,
    variant: Variant,
    fingerprint: &'a str,
    mcmc: &'a McmcSettings,
    sweeps_done: usize,
    draws: usize,
    complete: bool,
    resumed: bool,
    started_unix: u64,
    wall_seconds: f64,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let hyper = hyperparameters(a.variant, &a.chain)?;
    let data = read_dataset(&a.data)?;
    let fit = fit_data(&data, &hyper)?;
    create_dir(&a.out)?;
    let ck_path = a.out.join(CHECKPOINT_FILE);
    let mut sampler = if a.resume {
        Sampler::resume(&fit, &hyper, Checkpoint::read(&ck_path)?)?
    } else {
        Sampler::new(&fit, &hyper)?
    };
    let policy = (a.checkpoint_every > 0).then(|| CheckpointPolicy { path: ck_path.clone(), every: a.checkpoint_every });
    let complete = match a.stop_after {
        Some(stop) => {
            sampler.run_until(stop, policy.as_ref())?;
            sampler.checkpoint().write(&ck_path)?;
            sampler.is_done()
        }
        None => {
            sampler.run(policy.as_ref())?;
            true
        }
    };
    let fp = sampler.fingerprint().to_string();
    let (sweeps_done, draws) = (sampler.sweeps_done(), sampler.draws().len());
    if complete {
        label_archive(sampler.into_archive(), &data).write(&a.out.join(ARCHIVE_FILE))?;
    }
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        data: a.data.display().to_string(),
        variant: a.variant,
        fingerprint: &fp,
        mcmc: &hyper.mcmc,
        sweeps_done,
        draws,
        complete,
        resumed: a.resume,
        started_unix,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&a.out.join(MANIFEST_FILE), &manifest)?;
    log::info!("{sweeps_done} sweeps, {draws} draws retained");
    Ok(())
}

#[derive(Serialize)]
struct ClusterSize {
    cluster: u32,
    size: usize,
}

#[derive(Serialize)]
struct PeriodSizes {
    period: i64,
    clusters: Vec<ClusterSize>,
}

#[derive(Serialize)]
struct Report {
    fingerprint: String,
    variant: Variant,
    draws: usize,
    n_clusters: usize,
    waic: htrpm::summary::Waic,
    cluster_sizes: Vec<PeriodSizes>,
    /// Period-major cluster labels of the point estimate.
    partition: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<htrpm::experiment::Evaluation>,
}

fn read_truth(path: &Path) -> Result<ScenarioTruth> {
    let text = fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

pub fn summarize(a: &SummarizeArgs) -> Result<()> {
    if a.grid_points < 2 {
        return Err(Error::InvalidArgument("--grid-points must be at least 2".into()));
    }
    let archive = ChainArchive::read(&a.chain).map_err(|e| match e {
        Error::Io(io) => io_at(&a.chain, io),
        other => other,
    })?;
    let truth = a.truth.as_deref().map(read_truth).transpose()?;
    if let Some(t) = &truth {
        htrpm::experiment::check_truth_shape(&archive, t)?;
    }
    let meta = &archive.meta;
    let mut labels = estimate_partition(&archive, SalsoScope::for_variant(meta.variant), SalsoSettings::default())?;
    let grid: Vec<f64> = (0..a.grid_points).map(|k| k as f64 / (a.grid_points - 1) as f64).collect();
    let curves = trajectory_summary(&archive, &mut labels, &grid)?;
    let original: Vec<f64> = grid.iter().map(|&t| meta.time_map.to_original(t)).collect();
    let tables = transition_tables(&labels, meta.n)?;
    let w = waic(&archive, meta.hyper.waic_fraction)?;
    let metrics = truth.as_ref().map(|t| evaluate_estimate(&archive, t, &labels)).transpose()?;

    create_dir(&a.out)?;
    let fp = &meta.fingerprint;
    write_stamped_csv(&a.out.join("partition.csv"), fp, |w| {
        write_partition(w, &labels, &meta.participant_ids, &meta.period_ids)
    })?;
    write_stamped_csv(&a.out.join("curves.csv"), fp, |w| write_curves(w, &curves, &original))?;
    write_stamped_csv(&a.out.join("transitions.csv"), fp, |w| write_transitions(w, &tables, &meta.period_ids))?;
    let sizes = cluster_sizes(&labels, meta.n)
        .into_iter()
        .zip(&meta.period_ids)
        .map(|(p, &period)| PeriodSizes {
            period,
            clusters: p.into_iter().map(|(cluster, size)| ClusterSize { cluster, size }).collect(),
        })
        .collect();
    let report = Report {
        fingerprint: fp.clone(),
        variant: meta.variant,
        draws: archive.draws.len(),
        n_clusters: curves.len(),
        waic: w,
        cluster_sizes: sizes,
        partition: labels,
        metrics,
    };
    write_json(&a.out.join("report.json"), &report)?;
    println!("waic {:.4}  clusters {}", report.waic.waic, report.n_clusters);
    if let Some(m) = &report.metrics {
        let acc = m.gamma_accuracy.map_or("-".to_string(), |g| format!("{g:.4}"));
        println!("vi {:.4}  ari {:.4}  mse {:.4}  gamma-accuracy {acc}", m.vi, m.ari, m.mse);
    }
    Ok(())
}

fn parse_numbers(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{what}: '{}' is not a number", v.trim())))
        })
        .collect()
}

/// `a0=…;a=…`; the `a0` part may be omitted for flat variants.
pub fn parse_grid(s: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut a0, mut a) = (None, None);
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("grid part '{part}' is not key=values")))?;
        let slot = match key.trim() {
            "a0" => &mut a0,
            "a" => &mut a,
            other => return Err(Error::InvalidArgument(format!("unknown grid key '{other}'"))),
        };
        if slot.is_some() {
            return Err(Error::InvalidArgument(format!("grid key '{}' repeated", key.trim())));
        }
        *slot = Some(parse_numbers(values, "grid")?);
    }
    let a = a.ok_or_else(|| Error::InvalidArgument("grid needs a=…".into()))?;
    Ok((a0.unwrap_or_default(), a))
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let (alpha0s, alphas) = parse_grid(&a.grid)?;
    if a.variant.is_hierarchical() && alpha0s.is_empty() {
        return Err(Error::InvalidArgument(format!("variant {} needs a0=… in the grid", a.variant)));
    }
    let base = hyperparameters(a.variant, &a.chain)?;
    let data = read_dataset(&a.data)?;
    let fp = fingerprint(&base, &fit_data(&data, &base)?)?;
    let rows = sensitivity_grid(&data, &base, &alpha0s, &alphas, worker_count()?)?;
    write_stamped_csv(&a.out, &fp, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["alpha0", "alpha", "clusters", "sizes", "waic"]).map_err(csv_err)?;
        for r in &rows {
            let sizes: Vec<String> = r.sizes.iter().map(usize::to_string).collect();
            w.write_record([
                r.alpha0.map_or(String::new(), |v| v.to_string()),
                r.alpha.to_string(),
                r.n_clusters.to_string(),
                sizes.join(";"),
                r.waic.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

/// `1-10`, `3` or `1,4,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("cannot parse seeds '{s}'"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi): (u64, u64) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
                if lo > hi {
                    return Err(bad());
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

pub fn experiment(a: &ExperimentArgs) -> Result<()> {
    let seeds = parse_seeds(&a.seeds)?;
    let variants: Vec<Variant> = a.variants.split(',').map(str::parse).collect::<Result<_>>()?;
    let mus: Vec<Option<f64>> = match &a.mu_eta {
        Some(s) => parse_numbers(s, "--mu-eta")?.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut jobs = Vec::new();
    for &mu_eta in &mus {
        for &seed in &seeds {
            // reject bad scenario flags before any chain runs
            simulate_one(a.scenario, seed, mu_eta)?;
            for &variant in &variants {
                let mcmc = McmcSettings { iterations: a.iters, burn_in: a.burnin, thin: a.thin, seed: chain_seed(seed) };
                jobs.push(Job { scenario: a.scenario, seed, mu_eta, variant, mcmc });
            }
        }
    }
    let results = run_jobs(&jobs, worker_count()?)?;
    write_results(&a.out, &results)?;
    let mut out = std::io::stdout().lock();
    for &mu in &mus {
        for &v in &variants {
            let sel: Vec<&JobResult> = results.iter().filter(|r| r.job.mu_eta == mu && r.job.variant == v).collect();
            let stat = |f: &dyn Fn(&JobResult) -> f64| mean_sd(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (vi, vi_sd) = stat(&|r| r.evaluation.vi);
            let (ari, ari_sd) = stat(&|r| r.evaluation.ari);
            let (mse, mse_sd) = stat(&|r| r.evaluation.mse);
            let mu = mu.map_or(String::new(), |m| format!(" mu_eta={m}"));
            writeln!(
                out,
                "{v:>6}{mu}  vi {vi:.3} ({vi_sd:.3})  ari {ari:.3} ({ari_sd:.3})  mse {mse:.3} ({mse_sd:.3})"
            )?;
        }
    }
    Ok(())
}

fn write_results(path: &PathBuf, results: &[JobResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "scenario", "mu_eta", "seed", "variant", "iterations", "burn_in", "thin", "vi", "ari", "mse",
        "gamma_accuracy", "waic", "clusters",
    ])
    .map_err(csv_err)?;
    for r in results {
        let (j, e) = (&r.job, &r.evaluation);
        w.write_record([
            j.scenario.to_string(),
            j.mu_eta.map_or(String::new(), |m| m.to_string()),
            j.seed.to_string(),
            j.variant.to_string(),
            j.mcmc.iterations.to_string(),
            j.mcmc.burn_in.to_string(),
            j.mcmc.thin.to_string(),
            e.vi.to_string(),
            e.ari.to_string(),
            e.mse.to_string(),
            e.gamma_accuracy.map_or(String::new(), |g| g.to_string()),
            e.waic.to_string(),
            e.n_clusters.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
