//! Generators for the two simulation scenarios with full ground truth.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::logistic;
use crate::model::{validate_dataset, PanelDataset, RawObservation};
use crate::random::RngStream;

/// Number of library functions.
pub const N_FUNCTIONS: usize = 6;

/// True period effects used by both scenarios.
pub const THETA_TRUE: [f64; 3] = [0.5, -0.5, 0.3];

/// Smooth trend `f_k(t)`, `k` in `1..=6`.
pub fn library_function(k: usize, t: f64) -> Result<f64> {
    let v = match k {
        1 => 4.0 * (3.0 * t).sin() - 2.0,
        2 => -3.0 * (3.0 * t).sin() + 1.5,
        3 => 3.0 * (3.0 * t).cos() - 0.5,
        4 => -3.0 * (3.0 * t).cos() + 0.5,
        5 => 3.0 * t,
        6 => 3.0 * (t - 1.0) * (t - 1.0) - 1.0,
        _ => return Err(Error::arg(format!("library function index must be in 1..=6, got {k}"))),
    };
    Ok(v)
}

/// Panel dimensions of a simulated study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub periods: usize,
    pub m: usize,
}

impl Default for SimDesign {
    fn default() -> Self {
        SimDesign { n: 50, periods: 5, m: 30 }
    }
}

/// Everything the generator decided. Cell-indexed vectors are period-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub scenario: u8,
    pub seed: u64,
    pub n: usize,
    pub periods: usize,
    pub mu_eta: Option<f64>,
    /// Library function index (1..=6) of each cell; doubles as its dish.
    pub functions: Vec<u8>,
    /// Observation times of each cell.
    pub times: Vec<Vec<f64>>,
    /// Smooth values `f_k(t)` at those times.
    pub smooth: Vec<Vec<f64>>,
    pub gamma: Vec<bool>,
    pub theta: Vec<Vec<f64>>,
    /// Transition coefficients; empty for the first period and scenario 1.
    pub eta: Vec<Vec<f64>>,
}

impl ScenarioTruth {
    pub fn period_functions(&self, j: usize) -> &[u8] {
        &self.functions[j * self.n..(j + 1) * self.n]
    }

    /// Share of fixed participants over all transitions.
    pub fn fixed_fraction(&self) -> f64 {
        let later = &self.gamma[self.n..];
        later.iter().filter(|&&g| g).count() as f64 / later.len() as f64
    }
}

fn covariates<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("positive sd");
    vec![1.0, normal.sample(rng), normal.sample(rng)]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draw times and outcomes for every cell given its function.
#[allow(clippy::too_many_arguments)]
fn finish<R: Rng + ?Sized>(
    scenario: u8,
    seed: u64,
    design: SimDesign,
    mu_eta: Option<f64>,
    functions: Vec<u8>,
    z: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
    gamma: Vec<bool>,
    eta: Vec<Vec<f64>>,
    rng: &mut R,
) -> Result<(PanelDataset, ScenarioTruth)> {
    let SimDesign { n, periods, m } = design;
    let theta = vec![THETA_TRUE.to_vec(); periods];
    let mut rows = Vec::with_capacity(n * periods * m);
    let mut times = Vec::with_capacity(n * periods);
    let mut smooth = Vec::with_capacity(n * periods);
    for (j, theta_j) in theta.iter().enumerate() {
        for i in 0..n {
            let c = j * n + i;
            let zt = dot(&z[c], theta_j);
            let mut ts = Vec::with_capacity(m);
            let mut fs = Vec::with_capacity(m);
            for _ in 0..m {
                let t: f64 = rng.random();
                let f = library_function(functions[c] as usize, t)?;
                let y = u8::from(rng.random::<f64>() < logistic(f + zt));
                rows.push(RawObservation {
                    participant: i as i64 + 1,
                    period: j as i64 + 1,
                    time: t,
                    y: f64::from(y),
                    z: z[c].clone(),
                    x: x[c].clone(),
                });
                ts.push(t);
                fs.push(f);
            }
            times.push(ts);
            smooth.push(fs);
        }
    }
    let data = validate_dataset(&rows)?;
    let truth = ScenarioTruth { scenario, seed, n, periods, mu_eta, functions, times, smooth, gamma, theta, eta };
    Ok((data, truth))
}

/// Scenario 1: every cell independently takes one of `f1..f4`; baseline
/// covariates are standard normal.
pub fn generate_scenario1(seed: u64) -> Result<(PanelDataset, ScenarioTruth)> {
    generate_scenario1_with(SimDesign::default(), seed)
}

pub fn generate_scenario1_with(design: SimDesign, seed: u64) -> Result<(PanelDataset, ScenarioTruth)> {
    let mut rng = RngStream::new(seed).split(1).rng();
    let cells = design.n * design.periods;
    let functions: Vec<u8> = (0..cells).map(|_| rng.random_range(1..=4u8)).collect();
    let z: Vec<Vec<f64>> = (0..cells).map(|_| covariates(1.0, &mut rng)).collect();
    let x = vec![vec![1.0]; cells];
    let gamma = vec![false; cells];
    let eta = vec![Vec::new(); design.periods];
    finish(1, seed, design, None, functions, z, x, gamma, eta, &mut rng)
}

/// Concentration used when reallocating flexible participants.
pub const SCENARIO2_ALPHA: f64 = 0.1;

/// Scenario 2: start from `f1`/`f2`; at each transition participants are
/// fixed with probability `logistic(X η_j)`, `η_j ~ N(μ_η 1, 0.5 I)`, and the
/// rest are reseated one by one in proportion to current cluster sizes or
/// [`SCENARIO2_ALPHA`] for a new cluster, which takes a function not yet
/// used in that period (any function once all are used).
pub fn generate_scenario2(seed: u64, mu_eta: f64) -> Result<(PanelDataset, ScenarioTruth)> {
    generate_scenario2_with(SimDesign::default(), seed, mu_eta)
}

pub fn generate_scenario2_with(design: SimDesign, seed: u64, mu_eta: f64) -> Result<(PanelDataset, ScenarioTruth)> {
    if !mu_eta.is_finite() {
        return Err(Error::arg(format!("mu_eta must be finite, got {mu_eta}")));
    }
    let SimDesign { n, periods, .. } = design;
    let cells = n * periods;
    let mut rng = RngStream::new(seed).split(2).rng();
    let eta_noise = Normal::new(0.0, 0.5f64.sqrt()).expect("positive sd");
    let sd = 0.5f64.sqrt();

    let x: Vec<Vec<f64>> = (0..cells).map(|_| covariates(sd, &mut rng)).collect();
    let z: Vec<Vec<f64>> = (0..cells).map(|_| covariates(sd, &mut rng)).collect();
    let mut functions = vec![0u8; cells];
    let mut gamma = vec![false; cells];
    let mut eta = vec![Vec::new(); periods];
    for f in functions.iter_mut().take(n) {
        *f = if rng.random::<bool>() { 1 } else { 2 };
    }
    for (j, eta_j) in eta.iter_mut().enumerate().skip(1) {
        let e: Vec<f64> = (0..3).map(|_| mu_eta + eta_noise.sample(&mut rng)).collect();
        let mut sizes = [0usize; N_FUNCTIONS + 1];
        for i in 0..n {
            let c = j * n + i;
            gamma[c] = rng.random::<f64>() < logistic(dot(&x[c], &e));
            if gamma[c] {
                functions[c] = functions[c - n];
                sizes[functions[c] as usize] += 1;
            }
        }
        for i in 0..n {
            let c = j * n + i;
            if gamma[c] {
                continue;
            }
            let mut weights: Vec<f64> = sizes[1..].iter().map(|&s| s as f64).collect();
            weights.push(SCENARIO2_ALPHA);
            let total: f64 = weights.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut pick = weights.len() - 1;
            for (k, w) in weights.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    pick = k;
                    break;
                }
                u -= w;
            }
            let f = if pick < N_FUNCTIONS {
                pick as u8 + 1
            } else {
                let unused: Vec<u8> = (1..=N_FUNCTIONS as u8).filter(|&k| sizes[k as usize] == 0).collect();
                if unused.is_empty() {
                    rng.random_range(1..=N_FUNCTIONS as u8)
                } else {
                    unused[rng.random_range(0..unused.len())]
                }
            };
            functions[c] = f;
            sizes[f as usize] += 1;
        }
        *eta_j = e;
    }
    finish(2, seed, design, Some(mu_eta), functions, z, x, gamma, eta, &mut rng)
}

/// Expected share of fixed participants implied by the scenario-2
/// generator, `E[logistic(X η)]` over `x_k ~ N(0, 1/2)` and
/// `η ~ N(μ 1, I/2)`, by tensor-product trapezoid quadrature.
pub fn expected_fixed_fraction(mu_eta: f64) -> f64 {
    // given x, X η ~ N(μ (1 + x1 + x2), (1 + x1² + x2²) / 2)
    let nodes = 161;
    let lim = 8.0;
    let h = 2.0 * lim / (nodes - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..nodes)
        .map(|k| {
            let u = -lim + k as f64 * h;
            let w = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
            (u, w * h * (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt())
        })
        .collect();
    let sd = 0.5f64.sqrt();
    let mut total = 0.0;
    for &(u1, w1) in &grid {
        let x1 = sd * u1;
        for &(u2, w2) in &grid {
            let x2 = sd * u2;
            let mean = mu_eta * (1.0 + x1 + x2);
            let s = (0.5 * (1.0 + x1 * x1 + x2 * x2)).sqrt();
            let inner: f64 = grid.iter().map(|&(v, wv)| wv * logistic(mean + s * v)).sum();
            total += w1 * w2 * inner;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::is_compatible;

    #[test]
    fn library_values() {
        assert_eq!(library_function(1, 0.0).unwrap(), -2.0);
        assert_eq!(library_function(5, 0.0).unwrap(), 0.0);
        assert_eq!(library_function(5, 1.0).unwrap(), 3.0);
        assert_eq!(library_function(6, 1.0).unwrap(), -1.0);
        assert!(library_function(0, 0.5).is_err());
        assert!(library_function(7, 0.5).is_err());
    }

    #[test]
    fn scenario1_shape_and_determinism() {
        let (d, t) = generate_scenario1(3).unwrap();
        assert_eq!((d.n, d.j, d.d_z, d.d_x), (50, 5, 3, 1));
        assert!(d.cells.iter().all(|c| c.len() == 30));
        assert!(t.functions.iter().all(|&f| (1..=4).contains(&f)));
        let (d2, t2) = generate_scenario1(3).unwrap();
        assert_eq!(d, d2);
        assert_eq!(t, t2);
        for (c, ts) in t.times.iter().enumerate() {
            for (m, &tt) in ts.iter().enumerate() {
                assert_eq!(t.smooth[c][m], library_function(t.functions[c] as usize, tt).unwrap());
                assert_eq!(d.cells[c].times[m], tt);
            }
        }
    }

    #[test]
    fn scenario2_invariants() {
        for (seed, mu) in [(1, -3.0), (2, 0.0), (3, 3.0)] {
            let (d, t) = generate_scenario2(seed, mu).unwrap();
            assert_eq!((d.d_z, d.d_x), (3, 3));
            assert!(t.period_functions(0).iter().all(|&f| f == 1 || f == 2));
            assert!(t.gamma[..t.n].iter().all(|&g| !g));
            for j in 1..t.periods {
                let fixed: Vec<usize> = (0..t.n).filter(|&i| t.gamma[j * t.n + i]).collect();
                for &i in &fixed {
                    assert_eq!(t.functions[j * t.n + i], t.functions[(j - 1) * t.n + i]);
                }
                assert!(is_compatible(t.period_functions(j - 1), t.period_functions(j), &fixed));
            }
        }
    }

    #[test]
    fn expected_fraction_is_symmetric_and_half_at_zero() {
        assert!((expected_fixed_fraction(0.0) - 0.5).abs() < 1e-10);
        let lo = expected_fixed_fraction(-3.0);
        let hi = expected_fixed_fraction(3.0);
        assert!((lo + hi - 1.0).abs() < 1e-10);
        assert!(lo > 0.05, "noise in the logit pulls the share toward 1/2: {lo}");
    }
}
