#![allow(dead_code)]

use std::path::Path;

use htrpm::gibbs::{fit_data, CheckpointPolicy, Checkpoint, DishParams, FitCell, FitData, Sampler};
use htrpm::model::{default_hyperparameters, Covariance, Hyperparameters, McmcSettings, Variant};
use htrpm::partition::is_compatible;
use htrpm::random::{ChainRng, RngStream};
use htrpm::sim::{generate_scenario2_with, SimDesign};
use htrpm::stats::{ks_one_sample, ks_two_sample, normal_cdf};

/// KS p-values of the no-data chain against the prior.
#[derive(Debug)]
pub struct PriorCheck {
    pub theta: f64,
    pub eta: Option<f64>,
    pub beta: f64,
}

impl PriorCheck {
    pub fn min_p(&self) -> f64 {
        self.theta.min(self.beta).min(self.eta.unwrap_or(1.0))
    }
}

/// Run the full sampler with every observation removed and compare the
/// marginals of θ_1[0], η_2[0] and the first coefficient of participant 0's
/// period-1 dish to their priors.
pub fn prior_reproduction(variant: Variant, draws: usize, thin: usize, seed: u64) -> PriorCheck {
    let (n, periods, q, dz, dx) = (8, 3, 4, 2, 2);
    let cells = (0..n * periods)
        .map(|_| FitCell { rows: vec![], y: vec![], z: vec![1.0, 0.3], x: vec![1.0, -0.7] })
        .collect();
    let data = FitData::from_cells(n, periods, q, dz, dx, cells).unwrap();
    let mut hyper = default_hyperparameters(variant);
    hyper.q = q;
    hyper.sigma_theta = Covariance::ScaledIdentity(2.0);
    hyper.mcmc = McmcSettings { iterations: draws * thin + 1, burn_in: draws * thin, thin: 1, seed };
    let mut sampler = Sampler::new(&data, &hyper).unwrap();
    let (mut theta, mut eta, mut beta) = (Vec::new(), Vec::new(), Vec::new());
    for s in 1..=draws * thin {
        sampler.step().unwrap();
        if s % thin == 0 {
            let st = sampler.state();
            theta.push(st.theta[0][0]);
            if variant.is_temporal() {
                eta.push(st.eta[1][0]);
            }
            beta.push(st.dish(st.partition.label(0, 0)).beta[0]);
        }
    }
    let mut rng: ChainRng = RngStream::new(seed).split(u64::MAX).rng();
    let reference: Vec<f64> = (0..draws).map(|_| DishParams::from_prior(q, &mut rng).unwrap().beta[0]).collect();
    PriorCheck {
        theta: ks_one_sample(&theta, |x| normal_cdf(x / 2f64.sqrt())),
        eta: variant.is_temporal().then(|| ks_one_sample(&eta, |x| normal_cdf(x / 5f64.sqrt()))),
        beta: ks_two_sample(&beta, &reference),
    }
}

/// Sweep a scenario-2 fit and check the compatibility requirement and the
/// restaurant bookkeeping after every sweep.
pub fn compatibility_run(design: SimDesign, mu_eta: f64, sweeps: usize, seed: u64) -> Result<(), String> {
    let (panel, _) = generate_scenario2_with(design, seed, mu_eta).map_err(|e| e.to_string())?;
    let mut hyper = default_hyperparameters(Variant::Htrpm);
    hyper.mcmc = McmcSettings { iterations: sweeps + 1, burn_in: sweeps, thin: 1, seed };
    let data = fit_data(&panel, &hyper).map_err(|e| e.to_string())?;
    let mut sampler = Sampler::new(&data, &hyper).map_err(|e| e.to_string())?;
    for s in 1..=sweeps {
        sampler.step().map_err(|e| e.to_string())?;
        let part = &sampler.state().partition;
        part.check_invariants().map_err(|e| format!("sweep {s}: {e}"))?;
        sampler.state().check().map_err(|e| format!("sweep {s}: {e}"))?;
        for j in 1..part.periods() {
            let fixed: Vec<usize> = (0..part.n()).filter(|&i| part.gamma(i, j)).collect();
            if !is_compatible(part.period_labels(j - 1), part.period_labels(j), &fixed) {
                return Err(format!("sweep {s}: periods {j} and {} incompatible", j + 1));
            }
        }
    }
    Ok(())
}

/// Hyperparameters for short test chains.
pub fn short_hyper(variant: Variant, iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Hyperparameters {
    let mut h = default_hyperparameters(variant);
    h.mcmc = McmcSettings { iterations, burn_in, thin, seed };
    h
}

/// Archive bytes of an uninterrupted run and of a run stopped at
/// `stop`, checkpointed, reloaded and resumed.
pub fn resume_pair(dir: &Path, variant: Variant, total: usize, stop: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let design = SimDesign { n: 12, periods: 3, m: 10 };
    let (panel, _) = generate_scenario2_with(design, seed, 0.0).unwrap();
    let hyper = short_hyper(variant, total, total / 2, 2, seed);
    let data = fit_data(&panel, &hyper).unwrap();

    let mut whole = Sampler::new(&data, &hyper).unwrap();
    whole.run(None).unwrap();
    let mut a = Vec::new();
    whole.into_archive().write_to(&mut a).unwrap();

    let ck_path = dir.join("chain.ckpt");
    let policy = CheckpointPolicy { path: ck_path.clone(), every: stop };
    let mut first = Sampler::new(&data, &hyper).unwrap();
    first.run_until(stop, Some(&policy)).unwrap();
    drop(first);
    let ck = Checkpoint::read(&ck_path).unwrap();
    let mut second = Sampler::resume(&data, &hyper, ck).unwrap();
    second.run(None).unwrap();
    let mut b = Vec::new();
    second.into_archive().write_to(&mut b).unwrap();
    (a, b)
}
