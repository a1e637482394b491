use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Variant;
use crate::partition::{DishId, PartitionSequence};
use crate::random::sample_inverse_gamma;

/// Spline coefficients of one dish and their horseshoe scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DishParams {
    pub beta: Vec<f64>,
    /// Global scale τ².
    pub tau2: f64,
    /// Local scales λ_q².
    pub lambda2: Vec<f64>,
    pub nu_tau: f64,
    pub nu_lambda: Vec<f64>,
}

impl DishParams {
    /// Zero coefficients with unit scales.
    pub fn initial(q: usize) -> Self {
        DishParams { beta: vec![0.0; q], tau2: 1.0, lambda2: vec![1.0; q], nu_tau: 1.0, nu_lambda: vec![1.0; q] }
    }

    /// Draw from the horseshoe prior through its inverse-gamma mixture:
    /// `ν ~ IG(1/2, 1)`, `scale² | ν ~ IG(1/2, 1/ν)`, `β_q ~ N(0, τ² λ_q²)`.
    pub fn from_prior<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Result<Self> {
        let nu_tau = sample_inverse_gamma(0.5, 1.0, rng)?;
        let tau2 = sample_inverse_gamma(0.5, 1.0 / nu_tau, rng)?;
        let mut nu_lambda = Vec::with_capacity(q);
        let mut lambda2 = Vec::with_capacity(q);
        let mut beta = Vec::with_capacity(q);
        for _ in 0..q {
            let nu = sample_inverse_gamma(0.5, 1.0, rng)?;
            let l2 = sample_inverse_gamma(0.5, 1.0 / nu, rng)?;
            let z: f64 = rng.sample(StandardNormal);
            nu_lambda.push(nu);
            lambda2.push(l2);
            beta.push(z * (tau2 * l2).sqrt());
        }
        Ok(DishParams { beta, tau2, lambda2, nu_tau, nu_lambda })
    }
}

/// Complete sampler state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub partition: PartitionSequence,
    /// Dish parameters by dish slot; `None` for free slots.
    pub dishes: Vec<Option<DishParams>>,
    /// Period effects θ_j.
    pub theta: Vec<Vec<f64>>,
    /// Transition coefficients η_j; empty in the first period and for
    /// non-temporal variants.
    pub eta: Vec<Vec<f64>>,
}

impl ModelState {
    /// Null start: one cluster, every coefficient zero.
    pub fn initial(variant: Variant, n: usize, periods: usize, q: usize, d_z: usize, d_x: usize) -> Self {
        let partition = PartitionSequence::single_cluster(n, periods, variant.is_hierarchical());
        let mut dishes = vec![None; partition.dish_capacity()];
        for d in partition.active_dishes() {
            dishes[d as usize] = Some(DishParams::initial(q));
        }
        let eta = (0..periods)
            .map(|j| if variant.is_temporal() && j > 0 { vec![0.0; d_x] } else { Vec::new() })
            .collect();
        ModelState { partition, dishes, theta: vec![vec![0.0; d_z]; periods], eta }
    }

    #[inline]
    pub fn dish(&self, d: DishId) -> &DishParams {
        self.dishes[d as usize].as_ref().expect("active dish has parameters")
    }

    #[inline]
    pub fn dish_mut(&mut self, d: DishId) -> &mut DishParams {
        self.dishes[d as usize].as_mut().expect("active dish has parameters")
    }

    /// Dish parameters and partition agree, scales are positive and all
    /// coefficients finite.
    pub fn check(&self) -> std::result::Result<(), String> {
        self.partition.check_invariants()?;
        for (d, p) in self.dishes.iter().enumerate() {
            let active = self.partition.is_active(d as DishId);
            match (active, p) {
                (true, None) => return Err(format!("active dish {d} has no parameters")),
                (false, Some(_)) => return Err(format!("free slot {d} holds parameters")),
                (true, Some(p)) => {
                    let positive = |v: f64| v > 0.0 && v.is_finite();
                    if !(positive(p.tau2)
                        && positive(p.nu_tau)
                        && p.lambda2.iter().all(|&v| positive(v))
                        && p.nu_lambda.iter().all(|&v| positive(v)))
                    {
                        return Err(format!("dish {d} has a non-positive scale"));
                    }
                    if p.beta.iter().any(|b| !b.is_finite()) {
                        return Err(format!("dish {d} has a non-finite coefficient"));
                    }
                }
                (false, None) => {}
            }
        }
        if self.theta.iter().chain(&self.eta).flatten().any(|v| !v.is_finite()) {
            return Err("non-finite period coefficient".into());
        }
        Ok(())
    }
}
