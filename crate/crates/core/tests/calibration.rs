//! Credible-interval coverage of the conditional updates on data simulated
//! from known parameters.

use htrpm::gibbs::{update_horseshoe, Conditionals, FitCell, FitData, ModelState};
use htrpm::model::{default_hyperparameters, Covariance, Variant};
use htrpm::partition::PartitionSequence;
use htrpm::random::{ChainRng, RngStream};
use htrpm::stats::quantile_sorted;
use htrpm::SplineBasis;
use rand::Rng;
use rand_distr::StandardNormal;

const REPS: u64 = 50;
const SWEEPS: usize = 1500;
const BURN: usize = 300;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn covers(draws: &mut [f64], truth: f64) -> bool {
    draws.sort_by(f64::total_cmp);
    quantile_sorted(draws, 0.025) <= truth && truth <= quantile_sorted(draws, 0.975)
}

/// Share of (repetition, coordinate) pairs whose 95% interval covers the
/// truth.
fn coverage(hits: &[bool]) -> f64 {
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

#[test]
fn beta_star_intervals_cover_truth() {
    let q = 6;
    let basis = SplineBasis::new(q).unwrap();
    let truth = [-1.5, -0.5, 1.0, 1.5, 0.0, -1.0];
    let mut hits = Vec::new();
    for rep in 0..REPS {
        let mut rng: ChainRng = RngStream::new(1000 + rep).rng();
        let n = 50;
        let cells: Vec<FitCell> = (0..n)
            .map(|_| {
                let times: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
                let rows = basis.design_rows(&times).unwrap();
                let y = rows.iter().map(|r| u8::from(rng.random::<f64>() < logistic(r.dot(&truth)))).collect();
                FitCell { rows, y, z: vec![], x: vec![] }
            })
            .collect();
        let data = FitData::from_cells(n, 1, q, 0, 0, cells).unwrap();
        let mut hyper = default_hyperparameters(Variant::Dp);
        hyper.q = q;
        let priors = hyper.validate_priors(0, 0).unwrap();
        let cond = Conditionals::new(&data, &hyper, &priors).unwrap();
        let mut state = ModelState::initial(Variant::Dp, n, 1, q, 0, 0);
        let mut kept: Vec<Vec<f64>> = vec![Vec::new(); q];
        for s in 0..SWEEPS {
            cond.update_beta_star(&mut state, 0, &mut rng).unwrap();
            update_horseshoe(state.dish_mut(0), &mut rng).unwrap();
            if s >= BURN {
                for (k, v) in state.dish(0).beta.iter().enumerate() {
                    kept[k].push(*v);
                }
            }
        }
        for (k, d) in kept.iter_mut().enumerate() {
            hits.push(covers(d, truth[k]));
        }
    }
    let c = coverage(&hits);
    assert!(c >= 0.90, "beta coverage {c}");
}

#[test]
fn theta_intervals_cover_truth() {
    let q = 4;
    let basis = SplineBasis::new(q).unwrap();
    let beta = [-1.0, 0.5, 0.5, -0.5];
    let theta = [0.5, -0.5, 0.3];
    let mut hits = Vec::new();
    for rep in 0..REPS {
        let mut rng: ChainRng = RngStream::new(2000 + rep).rng();
        let n = 50;
        let cells: Vec<FitCell> = (0..n)
            .map(|_| {
                let z = vec![1.0, rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let zt: f64 = z.iter().zip(&theta).map(|(a, b)| a * b).sum();
                let times: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
                let rows = basis.design_rows(&times).unwrap();
                let y = rows.iter().map(|r| u8::from(rng.random::<f64>() < logistic(r.dot(&beta) + zt))).collect();
                FitCell { rows, y, z, x: vec![] }
            })
            .collect();
        let data = FitData::from_cells(n, 1, q, 3, 0, cells).unwrap();
        let mut hyper = default_hyperparameters(Variant::Dp);
        hyper.q = q;
        let priors = hyper.validate_priors(3, 0).unwrap();
        let cond = Conditionals::new(&data, &hyper, &priors).unwrap();
        let mut state = ModelState::initial(Variant::Dp, n, 1, q, 3, 0);
        state.dish_mut(0).beta = beta.to_vec();
        let mut kept: Vec<Vec<f64>> = vec![Vec::new(); 3];
        for s in 0..SWEEPS {
            cond.update_theta(&mut state, 0, &mut rng).unwrap();
            if s >= BURN {
                for (k, v) in state.theta[0].iter().enumerate() {
                    kept[k].push(*v);
                }
            }
        }
        for (k, d) in kept.iter_mut().enumerate() {
            hits.push(covers(d, theta[k]));
        }
    }
    let c = coverage(&hits);
    assert!(c >= 0.90, "theta coverage {c}");
}

#[test]
fn eta_intervals_cover_truth() {
    let q = 4;
    let n = 50;
    let mut hits = Vec::new();
    for rep in 0..REPS {
        let mut rng: ChainRng = RngStream::new(3000 + rep).rng();
        // truth drawn from the prior N(0, 5 I)
        let eta: Vec<f64> = (0..3).map(|_| 5f64.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut cells = Vec::new();
        let mut gamma = vec![false; 2 * n];
        for j in 0..2 {
            for i in 0..n {
                let x = vec![1.0, rng.sample(StandardNormal), rng.sample(StandardNormal)];
                if j == 1 {
                    let lin: f64 = x.iter().zip(&eta).map(|(a, b)| a * b).sum();
                    gamma[n + i] = rng.random::<f64>() < logistic(lin);
                }
                cells.push(FitCell { rows: vec![], y: vec![], z: vec![], x });
            }
        }
        let data = FitData::from_cells(n, 2, q, 0, 3, cells).unwrap();
        let mut hyper = default_hyperparameters(Variant::Trpm);
        hyper.q = q;
        hyper.sigma_eta = Covariance::ScaledIdentity(5.0);
        let priors = hyper.validate_priors(0, 3).unwrap();
        let cond = Conditionals::new(&data, &hyper, &priors).unwrap();
        let mut state = ModelState::initial(Variant::Trpm, n, 2, q, 0, 3);
        let labels = state.partition.labels().to_vec();
        state.partition = PartitionSequence::from_labels(n, 2, false, &labels, &gamma).unwrap();
        let mut kept: Vec<Vec<f64>> = vec![Vec::new(); 3];
        for s in 0..SWEEPS {
            cond.update_eta(&mut state, 1, &mut rng).unwrap();
            if s >= BURN {
                for (k, v) in state.eta[1].iter().enumerate() {
                    kept[k].push(*v);
                }
            }
        }
        for (k, d) in kept.iter_mut().enumerate() {
            hits.push(covers(d, eta[k]));
        }
    }
    let c = coverage(&hits);
    assert!(c >= 0.90, "eta coverage {c}");
}
