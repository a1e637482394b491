//! Exact PG(1, z) draws with the alternating-series rejection sampler of
//! Polson, Scott & Windle (2013), built on Devroye's Jacobi sampler.
//!
//! `PG(1, z) = J*(1, z/2) / 4`. The proposal for `J*` is an exponential tail
//! to the right of `TRUNC` mixed with a truncated inverse Gaussian to its
//! left; acceptance is decided by bracketing the density with partial sums of
//! its series representation.

use std::f64::consts::{FRAC_2_PI, PI};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const TRUNC: f64 = 0.64;
const PI2_8: f64 = PI * PI / 8.0;

/// Standard normal CDF.
#[inline]
fn pnorm(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Series coefficients `a_n(x)` of the `J*(1, 0)` density at a fixed `x`,
/// with the `n`-independent factors hoisted.
struct Series {
    x: f64,
    pre: f64,
}

impl Series {
    #[inline]
    fn new(x: f64) -> Self {
        let pre = if x > TRUNC { 1.0 } else { (FRAC_2_PI / x) * (FRAC_2_PI / x).sqrt() };
        Series { x, pre }
    }

    #[inline]
    fn coef(&self, n: u32) -> f64 {
        let h = n as f64 + 0.5;
        let k = h * PI;
        if self.x > TRUNC {
            k * (-0.5 * k * k * self.x).exp()
        } else {
            self.pre * k * (-2.0 * h * h / self.x).exp()
        }
    }
}

/// Probability of drawing from the exponential (right) piece.
#[inline]
fn right_mass(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let rt = (1.0 / t).sqrt();
    let b = rt * (t * z - 1.0);
    let a = -rt * (t * z + 1.0);
    let q_over_p = if z < 20.0 {
        4.0 / PI * fz * (fz * t).exp() * ((-z).exp() * pnorm(b) + z.exp() * pnorm(a))
    } else {
        left_ratio_log(z, fz, a, b)
    };
    1.0 / (1.0 + q_over_p)
}

/// Left-to-right mass ratio evaluated in log space, safe for any tilt.
fn left_ratio_log(z: f64, fz: f64, a: f64, b: f64) -> f64 {
    let x0 = fz.ln() + fz * TRUNC;
    4.0 / PI * ((x0 - z + pnorm(b).ln()).exp() + (x0 + z + pnorm(a).ln()).exp())
}

/// Inverse Gaussian IG(mu = 1/z, 1) truncated to `(0, TRUNC)`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > t {
        loop {
            let x = loop {
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                if e1 * e1 <= 2.0 * e2 / t {
                    let d = 1.0 + t * e1;
                    break t / (d * d);
                }
            };
            let accept = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= accept {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let y = n * n;
            let muy = mu * y;
            let mut x = mu + 0.5 * mu * muy - 0.5 * mu * (4.0 * muy + muy * muy).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t {
                return x;
            }
        }
    }
}

/// Draw from PG(1, z).
pub fn sample_pg<R: Rng + ?Sized>(z: f64, rng: &mut R) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::arg(format!("PG tilt must be finite, got {z}")));
    }
    Ok(sample_pg_unchecked(z, rng))
}

/// [`sample_pg`] without the finiteness check, for hot loops whose linear
/// predictors are already clamped.
#[inline]
pub fn sample_pg_unchecked<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let z = 0.5 * z.abs();
    let fz = PI2_8 + 0.5 * z * z;
    let p_right = right_mass(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_right {
            TRUNC + rng.sample::<f64, _>(Exp1) / fz
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let series = Series::new(x);
        let mut s = series.coef(0);
        let y = rng.random::<f64>() * s;
        let mut n = 0u32;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series.coef(n);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series.coef(n);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// `E[PG(1, z)] = tanh(z/2) / (2z)`, with limit 1/4 at zero.
pub fn pg_mean(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        0.25
    } else {
        (0.5 * z).tanh() / (2.0 * z)
    }
}
