use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::data::{FitCell, FitData};
use super::state::{DishParams, ModelState};
use crate::error::{Error, Result};
use crate::model::{Hyperparameters, ResolvedPriors, Variant};
use crate::partition::DishId;
use crate::random::{sample_categorical, sample_inverse_gamma, sample_mvn_canonical, sample_pg_unchecked};
use crate::spline::SparseRow;

/// Linear predictors are clamped to this magnitude.
pub const PSI_CLAMP: f64 = 35.0;

/// Bounds kept on horseshoe variance terms so that precisions stay finite.
const SCALE_FLOOR: f64 = 1e-150;
const SCALE_CEIL: f64 = 1e150;

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `y` under logit `psi`.
#[inline]
pub fn bernoulli_loglik(y: u8, psi: f64) -> f64 {
    f64::from(y) * psi - log1p_exp(psi)
}

/// Probability of fixing a participant: `φ` against `(1 - φ) × pred`, zero
/// when fixing would break compatibility.
pub fn gamma_probability(phi: f64, admissible: bool, pred: f64) -> f64 {
    if !admissible {
        return 0.0;
    }
    let keep = phi;
    let free = (1.0 - phi) * pred;
    if keep + free <= 0.0 {
        0.0
    } else {
        keep / (keep + free)
    }
}

/// Add one augmented observation `ω rowᵀrow`, `κ row` to a dense `q × q`
/// precision and linear term.
#[inline]
pub fn add_observation(precision: &mut [f64], linear: &mut [f64], q: usize, row: &SparseRow, omega: f64, kappa: f64) {
    let s = row.start as usize;
    let len = row.len as usize;
    for a in 0..len {
        let va = row.vals[a];
        linear[s + a] += kappa * va;
        let wa = omega * va;
        let base = (s + a) * q + s;
        for b in 0..len {
            precision[base + b] += wa * row.vals[b];
        }
    }
}

fn clamp_scale(v: f64) -> f64 {
    v.clamp(SCALE_FLOOR, SCALE_CEIL)
}

/// Conjugate horseshoe updates of one dish's scales given its coefficients.
pub fn update_horseshoe<R: Rng + ?Sized>(p: &mut DishParams, rng: &mut R) -> Result<()> {
    let q = p.beta.len();
    for k in 0..q {
        let scale = 1.0 / p.nu_lambda[k] + p.beta[k] * p.beta[k] / (2.0 * p.tau2);
        p.lambda2[k] = clamp_scale(sample_inverse_gamma(1.0, scale, rng)?);
    }
    let ss: f64 = p.beta.iter().zip(&p.lambda2).map(|(b, l)| b * b / l).sum();
    let scale = 1.0 / p.nu_tau + 0.5 * ss;
    p.tau2 = clamp_scale(sample_inverse_gamma((q as f64 + 1.0) / 2.0, scale, rng)?);
    for k in 0..q {
        p.nu_lambda[k] = clamp_scale(sample_inverse_gamma(1.0, 1.0 + 1.0 / p.lambda2[k], rng)?);
    }
    p.nu_tau = clamp_scale(sample_inverse_gamma(1.0, 1.0 + 1.0 / p.tau2, rng)?);
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse())
}

/// Full conditionals of the model for a fixed dataset and prior.
pub struct Conditionals<'a> {
    data: &'a FitData,
    variant: Variant,
    alpha: f64,
    alpha0: f64,
    aux: usize,
    theta_precision: DMatrix<f64>,
    eta_precision: DMatrix<f64>,
    eta_linear: DVector<f64>,
    clamped: Cell<u64>,
}

impl<'a> Conditionals<'a> {
    pub fn new(data: &'a FitData, hyper: &Hyperparameters, priors: &ResolvedPriors) -> Result<Self> {
        let eta_precision = inverse_spd(&priors.sigma_eta)?;
        let eta_linear = &eta_precision * DVector::from_column_slice(&priors.mu_eta);
        Ok(Conditionals {
            data,
            variant: hyper.variant,
            alpha: hyper.alpha,
            alpha0: hyper.alpha0.unwrap_or(1.0),
            aux: hyper.aux_dishes,
            theta_precision: inverse_spd(&priors.sigma_theta)?,
            eta_precision,
            eta_linear,
            clamped: Cell::new(0),
        })
    }

    pub fn data(&self) -> &FitData {
        self.data
    }

    /// Number of clamped linear predictors since the last call.
    pub fn take_clamp_count(&self) -> u64 {
        self.clamped.replace(0)
    }

    #[inline]
    fn guard(&self, psi: f64) -> Result<f64> {
        if !psi.is_finite() {
            return Err(Error::Numeric { sweep: 0, what: format!("linear predictor is {psi}") });
        }
        if psi.abs() > PSI_CLAMP {
            self.clamped.set(self.clamped.get() + 1);
            Ok(psi.clamp(-PSI_CLAMP, PSI_CLAMP))
        } else {
            Ok(psi)
        }
    }

    #[inline]
    fn z_theta(&self, state: &ModelState, i: usize, j: usize) -> f64 {
        dot(&self.data.cell(i, j).z, &state.theta[j])
    }

    fn cell_loglik_with(&self, cell: &FitCell, beta: &[f64], z_theta: f64) -> Result<f64> {
        let mut ll = 0.0;
        for (row, &y) in cell.rows.iter().zip(&cell.y) {
            ll += bernoulli_loglik(y, self.guard(row.dot(beta) + z_theta)?);
        }
        Ok(ll)
    }

    /// Log-likelihood of the observations of `(i, j)` under the current state.
    pub fn cell_loglik(&self, state: &ModelState, i: usize, j: usize) -> Result<f64> {
        let d = state.partition.label(i, j);
        self.cell_loglik_with(self.data.cell(i, j), &state.dish(d).beta, self.z_theta(state, i, j))
    }

    /// Per-cell log-likelihoods in period-major order.
    pub fn cell_logliks(&self, state: &ModelState) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.data.n * self.data.periods);
        for j in 0..self.data.periods {
            for i in 0..self.data.n {
                out.push(self.cell_loglik(state, i, j)?);
            }
        }
        Ok(out)
    }

    /// Transition probability `φ_ij`.
    pub fn phi(&self, state: &ModelState, i: usize, j: usize) -> Result<f64> {
        Ok(logistic(self.guard(dot(&self.data.cell(i, j).x, &state.eta[j]))?))
    }

    /// Resample the fixed flag of `(i, j)`.
    pub fn update_gamma<R: Rng + ?Sized>(&self, state: &mut ModelState, i: usize, j: usize, rng: &mut R) -> Result<()> {
        if j == 0 {
            return Err(Error::arg("gamma is undefined in the first period"));
        }
        let phi = self.phi(state, i, j)?;
        let part = &state.partition;
        let admissible = part.gamma_admissible(i, j);
        let pred = if admissible { part.fixed_set_predictive(i, j, self.alpha, self.alpha0) } else { 0.0 };
        let p = gamma_probability(phi, admissible, pred);
        let fixed = rng.random::<f64>() < p;
        state.partition.set_gamma(i, j, fixed)
    }

    /// Reallocate flexible participant `i` in period `j` with auxiliary
    /// fresh dishes; fixed participants are left alone.
    pub fn update_cluster<R: Rng + ?Sized>(&self, state: &mut ModelState, i: usize, j: usize, rng: &mut R) -> Result<()> {
        if j > 0 && state.partition.gamma(i, j) {
            return Ok(());
        }
        let q = self.data.q;
        let allowed = state.partition.allowed_for(i, j);
        let removal = state.partition.remove(i, j)?;
        let vacated = if removal.dish_emptied { state.dishes[removal.dish as usize].take() } else { None };
        let pred = state.partition.predictive(i, j, self.aux, self.alpha, self.alpha0, &allowed)?;

        let mut fresh = Vec::with_capacity(pred.n_fresh);
        let mut vacated = vacated;
        for _ in 0..pred.n_fresh {
            fresh.push(match vacated.take() {
                Some(p) => p,
                None => DishParams::from_prior(q, rng)?,
            });
        }

        let cell = self.data.cell(i, j);
        let zt = self.z_theta(state, i, j);
        let mut lw = pred.log_weights;
        for (w, &d) in lw.iter_mut().zip(&pred.dishes) {
            *w += self.cell_loglik_with(cell, &state.dish(d).beta, zt)?;
        }
        for (w, p) in lw[pred.dishes.len()..].iter_mut().zip(&fresh) {
            *w += self.cell_loglik_with(cell, &p.beta, zt)?;
        }
        let k = sample_categorical(&lw, rng)?;
        if k < pred.dishes.len() {
            state.partition.assign(i, j, pred.dishes[k])?;
        } else {
            let d = state.partition.assign_fresh(i, j)?;
            if state.dishes.len() < state.partition.dish_capacity() {
                state.dishes.resize(state.partition.dish_capacity(), None);
            }
            let params = fresh.swap_remove(k - pred.dishes.len());
            state.dishes[d as usize] = Some(params);
        }
        Ok(())
    }

    /// Pólya-Gamma Gibbs step for the coefficients of dish `d`, pooling
    /// every observation served that dish in any period.
    pub fn update_beta_star<R: Rng + ?Sized>(&self, state: &mut ModelState, d: DishId, rng: &mut R) -> Result<()> {
        if !state.partition.is_active(d) {
            return Err(Error::arg(format!("dish {d} has no members")));
        }
        let q = self.data.q;
        let mut precision = vec![0.0; q * q];
        let mut linear = vec![0.0; q];
        {
            let beta = &state.dish(d).beta;
            for j in 0..self.data.periods {
                for (i, &label) in state.partition.period_labels(j).iter().enumerate() {
                    if label != d {
                        continue;
                    }
                    let cell = self.data.cell(i, j);
                    let zt = self.z_theta(state, i, j);
                    for (row, &y) in cell.rows.iter().zip(&cell.y) {
                        let psi = self.guard(row.dot(beta) + zt)?;
                        let omega = sample_pg_unchecked(psi, rng);
                        add_observation(&mut precision, &mut linear, q, row, omega, f64::from(y) - 0.5 - omega * zt);
                    }
                }
            }
        }
        let p = state.dish_mut(d);
        for k in 0..q {
            precision[k * q + k] += 1.0 / (p.tau2 * p.lambda2[k]);
        }
        let draw = sample_mvn_canonical(DMatrix::from_vec(q, q, precision), &DVector::from_vec(linear), rng)?;
        p.beta = draw;
        Ok(())
    }

    /// Gibbs step for the period effects θ_j with the spline part as offset.
    pub fn update_theta<R: Rng + ?Sized>(&self, state: &mut ModelState, j: usize, rng: &mut R) -> Result<()> {
        let dz = self.data.d_z;
        if dz == 0 {
            return Ok(());
        }
        let mut precision = self.theta_precision.clone();
        let mut linear = DVector::zeros(dz);
        for i in 0..self.data.n {
            let cell = self.data.cell(i, j);
            let beta = &state.dish(state.partition.label(i, j)).beta;
            let zt = dot(&cell.z, &state.theta[j]);
            let mut w = 0.0;
            let mut k = 0.0;
            for (row, &y) in cell.rows.iter().zip(&cell.y) {
                let s = row.dot(beta);
                let omega = sample_pg_unchecked(self.guard(s + zt)?, rng);
                w += omega;
                k += f64::from(y) - 0.5 - omega * s;
            }
            accumulate_outer(&mut precision, &mut linear, &cell.z, w, k);
        }
        state.theta[j] = sample_mvn_canonical(precision, &linear, rng)?;
        Ok(())
    }

    /// Pólya-Gamma logistic regression of the fixed flags of period `j` on
    /// the transition covariates.
    pub fn update_eta<R: Rng + ?Sized>(&self, state: &mut ModelState, j: usize, rng: &mut R) -> Result<()> {
        if j == 0 {
            return Err(Error::arg("eta is undefined in the first period"));
        }
        let mut precision = self.eta_precision.clone();
        let mut linear = self.eta_linear.clone();
        for i in 0..self.data.n {
            let x = &self.data.cell(i, j).x;
            let psi = self.guard(dot(x, &state.eta[j]))?;
            let omega = sample_pg_unchecked(psi, rng);
            let g = if state.partition.gamma(i, j) { 0.5 } else { -0.5 };
            accumulate_outer(&mut precision, &mut linear, x, omega, g);
        }
        state.eta[j] = sample_mvn_canonical(precision, &linear, rng)?;
        Ok(())
    }

    /// One full sweep: per period, fixed flags, clusters, coefficients and
    /// scales of every dish served in that period, θ_j, then η_j.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let temporal = self.variant.is_temporal();
        for j in 0..self.data.periods {
            if temporal && j > 0 {
                for i in 0..self.data.n {
                    self.update_gamma(state, i, j, rng)?;
                }
            }
            for i in 0..self.data.n {
                self.update_cluster(state, i, j, rng)?;
            }
            let mut dishes: Vec<DishId> = state.partition.period_labels(j).to_vec();
            dishes.sort_unstable();
            dishes.dedup();
            for d in dishes {
                self.update_beta_star(state, d, rng)?;
                update_horseshoe(state.dish_mut(d), rng)?;
            }
            self.update_theta(state, j, rng)?;
            if temporal && j > 0 {
                self.update_eta(state, j, rng)?;
            }
        }
        debug_assert_eq!(state.check(), Ok(()));
        Ok(())
    }
}

/// `P += w v vᵀ`, `b += k v`.
fn accumulate_outer(precision: &mut DMatrix<f64>, linear: &mut DVector<f64>, v: &[f64], w: f64, k: f64) {
    let d = v.len();
    for a in 0..d {
        linear[a] += k * v[a];
        for b in 0..d {
            precision[(a, b)] += w * v[a] * v[b];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_hyperparameters;
    use crate::partition::PartitionSequence;
    use crate::random::RngStream;

    #[test]
    fn gamma_probability_examples() {
        assert!((gamma_probability(0.5, true, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(gamma_probability(1.0, true, 0.3), 1.0);
        assert_eq!(gamma_probability(0.9, false, 0.3), 0.0);
    }

    #[test]
    fn log1p_exp_is_stable() {
        assert!((log1p_exp(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((log1p_exp(800.0) - 800.0).abs() < 1e-12);
        assert!(log1p_exp(-800.0) >= 0.0);
        assert!((bernoulli_loglik(1, 35.0)).abs() < 1e-14);
    }

    #[test]
    fn one_observation_flat_prior_mean() {
        // Q = 1, design 1, offset 0, vague prior: mean = (y - 1/2) / ω
        let row = SparseRow::dense(&[1.0]);
        for (y, omega) in [(1u8, 0.2), (0, 0.7)] {
            let mut p = vec![0.0];
            let mut b = vec![0.0];
            add_observation(&mut p, &mut b, 1, &row, omega, f64::from(y) - 0.5);
            p[0] += 1e-12;
            let mean = b[0] / p[0];
            assert!((mean - (f64::from(y) - 0.5) / omega).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_accumulation_matches_dense() {
        let q = 6;
        let row = SparseRow { start: 2, len: 4, vals: [0.1, 0.5, 0.3, 0.1] };
        let dense = row.to_dense(q);
        let mut p = vec![0.0; q * q];
        let mut b = vec![0.0; q];
        add_observation(&mut p, &mut b, q, &row, 0.3, -0.2);
        for r in 0..q {
            assert!((b[r] + 0.2 * dense[r]).abs() < 1e-15);
            for c in 0..q {
                assert!((p[r * q + c] - 0.3 * dense[r] * dense[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn horseshoe_zero_beta_and_q1_shapes() {
        // β = 0: λ² | ν ~ IG(1, 1/ν), whose median is (1/ν)/ln 2
        let mut rng = RngStream::new(3).rng();
        let nu = 0.5;
        let mut draws = Vec::new();
        for _ in 0..20_000 {
            let mut p = DishParams::initial(1);
            p.nu_lambda[0] = nu;
            update_horseshoe(&mut p, &mut rng).unwrap();
            draws.push(p.lambda2[0]);
        }
        draws.sort_by(f64::total_cmp);
        let median = draws[draws.len() / 2];
        let expected = (1.0 / nu) / 2f64.ln();
        assert!((median / expected - 1.0).abs() < 0.05, "{median} vs {expected}");
    }

    fn two_dish_state() -> (FitData, ModelState) {
        let cell = |y: Vec<u8>| FitCell { rows: vec![SparseRow::dense(&[1.0]); y.len()], y, z: vec![], x: vec![] };
        let data = FitData::from_cells(3, 1, 1, 0, 0, vec![cell(vec![1]), cell(vec![0]), cell(vec![1])]).unwrap();
        let partition = PartitionSequence::from_labels(3, 1, false, &[0, 1, 0], &[false; 3]).unwrap();
        let mut dishes = vec![Some(DishParams::initial(1)), Some(DishParams::initial(1))];
        // removing participant 2 leaves two dishes of size 1
        dishes[0].as_mut().unwrap().beta = vec![9f64.ln()];
        dishes[1].as_mut().unwrap().beta = vec![-9f64.ln()];
        let state = ModelState { partition, dishes, theta: vec![vec![]], eta: vec![vec![]] };
        (data, state)
    }

    #[test]
    fn cluster_update_follows_softmax() {
        // equal prior mass, y = 1 has likelihood 0.9 vs 0.1: odds 9:1
        let (data, state) = two_dish_state();
        let mut hyper = default_hyperparameters(Variant::Dp);
        hyper.alpha = 1e-300;
        let priors = hyper.validate_priors(0, 0).unwrap();
        let cond = Conditionals::new(&data, &hyper, &priors).unwrap();
        let mut rng = RngStream::new(8).rng();
        let reps = 20_000;
        let mut first = 0;
        for _ in 0..reps {
            let mut s = state.clone();
            cond.update_cluster(&mut s, 2, 0, &mut rng).unwrap();
            if s.partition.label(2, 0) == s.partition.label(0, 0) {
                first += 1;
            }
        }
        let p = first as f64 / reps as f64;
        let expected = 0.9;
        let se = (expected * (1.0 - expected) / reps as f64).sqrt();
        assert!((p - expected).abs() < 3.0 * se, "{p} vs {expected}");
    }

    #[test]
    fn fixed_participant_is_not_moved() {
        let cell = FitCell { rows: vec![SparseRow::dense(&[1.0])], y: vec![1], z: vec![], x: vec![1.0] };
        let data = FitData::from_cells(2, 2, 1, 0, 1, vec![cell; 4]).unwrap();
        let hyper = default_hyperparameters(Variant::Trpm);
        let priors = hyper.validate_priors(0, 1).unwrap();
        let cond = Conditionals::new(&data, &hyper, &priors).unwrap();
        let mut state = ModelState::initial(Variant::Trpm, 2, 2, 1, 0, 1);
        state.partition.set_gamma(0, 1, true).unwrap();
        let before = state.clone();
        let mut rng = RngStream::new(1).rng();
        cond.update_cluster(&mut state, 0, 1, &mut rng).unwrap();
        assert_eq!(state, before);
    }

    #[test]
    fn incompatible_gamma_forced_to_zero() {
        let cell = FitCell { rows: vec![SparseRow::dense(&[1.0])], y: vec![1], z: vec![], x: vec![1.0] };
        let data = FitData::from_cells(3, 2, 1, 0, 1, vec![cell; 6]).unwrap();
        let hyper = default_hyperparameters(Variant::Htrpm);
        let priors = hyper.validate_priors(0, 1).unwrap();
        let cond = Conditionals::new(&data, &hyper, &priors).unwrap();
        // 0 and 1 together in period 0, apart in period 1; 1 fixed
        let partition =
            PartitionSequence::from_labels(3, 2, true, &[0, 0, 1, 0, 1, 1], &[false, false, false, false, true, false])
                .unwrap();
        let mut state = ModelState::initial(Variant::Htrpm, 3, 2, 1, 0, 1);
        state.dishes = vec![Some(DishParams::initial(1)), Some(DishParams::initial(1))];
        state.partition = partition;
        state.eta[1] = vec![30.0];
        let mut rng = RngStream::new(2).rng();
        for _ in 0..100 {
            cond.update_gamma(&mut state, 0, 1, &mut rng).unwrap();
            assert!(!state.partition.gamma(0, 1));
        }
        assert!(cond.update_gamma(&mut state, 0, 0, &mut rng).is_err());
    }
}
