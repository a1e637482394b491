use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Draw with density proportional to `x^(-shape-1) exp(-scale / x)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
        return Err(Error::arg(format!("inverse gamma needs positive parameters, got ({shape}, {scale})")));
    }
    let g: f64 = if shape == 1.0 {
        rng.sample(Exp1)
    } else {
        Gamma::new(shape, 1.0).map_err(|e| Error::arg(e.to_string()))?.sample(rng)
    };
    Ok(scale / g)
}

fn standard_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draw from `N(mean, covariance)`.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], covariance: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    let dim = mean.len();
    if covariance.nrows() != dim || covariance.ncols() != dim {
        return Err(Error::arg("covariance shape does not match mean"));
    }
    let chol = covariance.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let z = standard_normal_vec(dim, rng);
    let x = chol.l() * z + DVector::from_column_slice(mean);
    Ok(x.as_slice().to_vec())
}

/// Draw from the Gaussian with the given precision and linear term, i.e.
/// `N(P⁻¹ b, P⁻¹)`, by solving against the Cholesky factor of `P`.
pub fn sample_mvn_canonical<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let dim = linear.len();
    let chol = precision.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let mean = chol.solve(linear);
    let z = standard_normal_vec(dim, rng);
    // L^T u = z gives u ~ N(0, P^-1)
    let u = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok((mean + u).as_slice().to_vec())
}

/// Draw from `N(mean, precision⁻¹)`.
pub fn sample_mvn_precision<R: Rng + ?Sized>(
    mean: &[f64],
    precision: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let b = precision * DVector::from_column_slice(mean);
    sample_mvn_canonical(precision.clone(), &b, rng)
}

/// Index drawn with probability `softmax(log_weights)`.
pub fn sample_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let max = log_weights
        .iter()
        .copied()
        .filter(|w| !w.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::arg("categorical draw with no finite log-weight"));
    }
    let total: f64 = log_weights.iter().map(|&w| weight(w, max)).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in log_weights.iter().enumerate() {
        let p = weight(w, max);
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return Ok(k);
            }
        }
    }
    Ok(last)
}

#[inline]
fn weight(w: f64, max: f64) -> f64 {
    if w.is_nan() {
        0.0
    } else {
        (w - max).exp()
    }
}
