//! Domain types shared by every stage of the pipeline: the panel dataset,
//! model variants and hyperparameters.
//!
//! The observation model is a Bernoulli-logit concurrent regression,
//!
//! ```text
//! logit P(y_ijm = 1) = T(t_ijm) · β*_{d_ij} + Z_ij · θ_j
//! ```
//!
//! where `T` is a cubic B-spline row, `d_ij` the global cluster ("dish") of
//! participant `i` in period `j`, and `θ_j` a period-level effect. The random
//! measures of the hierarchical Dirichlet process are never represented
//! explicitly; they are integrated out through the Chinese-restaurant
//! franchise counts kept in [`crate::partition::PartitionSequence`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which prior on the partition sequence to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Temporal dependence through γ flags plus clusters shared across periods.
    Htrpm,
    /// Temporal dependence, clusters private to each period.
    Trpm,
    /// Clusters shared across periods, no temporal flags.
    Hdp,
    /// Independent Dirichlet process per period.
    Dp,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Htrpm, Variant::Hdp, Variant::Trpm, Variant::Dp];

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Variant::Htrpm | Variant::Hdp)
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, Variant::Htrpm | Variant::Trpm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Htrpm => "htrpm",
            Variant::Trpm => "trpm",
            Variant::Hdp => "hdp",
            Variant::Dp => "dp",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "htrpm" => Ok(Variant::Htrpm),
            "trpm" => Ok(Variant::Trpm),
            "hdp" => Ok(Variant::Hdp),
            "dp" => Ok(Variant::Dp),
            other => Err(Error::arg(format!("unknown variant '{other}'"))),
        }
    }
}

/// One row of long-format input before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub participant: i64,
    pub period: i64,
    pub time: f64,
    pub y: f64,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
}

/// All observations of one participant within one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Observation times rescaled to `[0, 1]`.
    pub times: Vec<f64>,
    pub y: Vec<u8>,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
}

impl Cell {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Affine map from internal `[0, 1]` time back to study units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub offset: f64,
    pub scale: f64,
}

impl TimeMap {
    pub const IDENTITY: TimeMap = TimeMap { offset: 0.0, scale: 1.0 };

    pub fn to_internal(&self, original: f64) -> f64 {
        (original - self.offset) / self.scale
    }

    pub fn to_original(&self, internal: f64) -> f64 {
        self.offset + self.scale * internal
    }
}

/// Validated panel of binary trajectories: every participant observed at
/// least once in every period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub n: usize,
    pub j: usize,
    pub d_z: usize,
    pub d_x: usize,
    pub participant_ids: Vec<i64>,
    pub period_ids: Vec<i64>,
    /// Cells in period-major order, see [`PanelDataset::cell`].
    pub cells: Vec<Cell>,
    pub time_map: TimeMap,
}

impl PanelDataset {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[j * self.n + i]
    }

    pub fn total_observations(&self) -> usize {
        self.cells.iter().map(Cell::len).sum()
    }

    /// Times of cell `(i, j)` in original study units.
    pub fn original_times(&self, i: usize, j: usize) -> Vec<f64> {
        self.cell(i, j).times.iter().map(|&t| self.time_map.to_original(t)).collect()
    }

    /// Long-format rows in original units, ordered by period then participant.
    pub fn to_rows(&self) -> Vec<RawObservation> {
        let mut rows = Vec::with_capacity(self.total_observations());
        for j in 0..self.j {
            for i in 0..self.n {
                let cell = self.cell(i, j);
                for (m, &t) in cell.times.iter().enumerate() {
                    rows.push(RawObservation {
                        participant: self.participant_ids[i],
                        period: self.period_ids[j],
                        time: self.time_map.to_original(t),
                        y: f64::from(cell.y[m]),
                        z: cell.z.clone(),
                        x: cell.x.clone(),
                    });
                }
            }
        }
        rows
    }
}

/// Check the panel assumptions and rescale times to `[0, 1]`.
///
/// Times already inside `[0, 1]` are kept as is; otherwise they are mapped
/// affinely from `[min, max]`.
pub fn validate_dataset(rows: &[RawObservation]) -> Result<PanelDataset> {
    let first = rows.first().ok_or_else(|| Error::data("no observations"))?;
    let d_z = first.z.len();
    let d_x = first.x.len();

    let mut participants: Vec<i64> = rows.iter().map(|r| r.participant).collect();
    participants.sort_unstable();
    participants.dedup();
    let mut periods: Vec<i64> = rows.iter().map(|r| r.period).collect();
    periods.sort_unstable();
    periods.dedup();
    let n = participants.len();
    let j_count = periods.len();

    let p_index: BTreeMap<i64, usize> = participants.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let j_index: BTreeMap<i64, usize> = periods.iter().enumerate().map(|(k, &p)| (p, k)).collect();

    let mut cells: Vec<Option<Cell>> = vec![None; n * j_count];
    let (mut t_min, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (row_no, r) in rows.iter().enumerate() {
        if r.z.len() != d_z || r.x.len() != d_x {
            return Err(Error::data(format!(
                "inconsistent covariate dimension at row {}: expected ({d_z}, {d_x}), got ({}, {})",
                row_no + 1,
                r.z.len(),
                r.x.len()
            )));
        }
        if !r.time.is_finite() {
            return Err(Error::data(format!("non-finite time at row {}", row_no + 1)));
        }
        let y = if r.y == 0.0 {
            0u8
        } else if r.y == 1.0 {
            1u8
        } else {
            return Err(Error::data(format!("non-binary outcome {} at row {}", r.y, row_no + 1)));
        };
        if r.z.iter().chain(&r.x).any(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite covariate at row {}", row_no + 1)));
        }
        if d_z > 0 && r.z[0] != 1.0 {
            return Err(Error::data(format!("z1 must be the intercept column (1) at row {}", row_no + 1)));
        }
        if d_x > 0 && r.x[0] != 1.0 {
            return Err(Error::data(format!("x1 must be the intercept column (1) at row {}", row_no + 1)));
        }
        t_min = t_min.min(r.time);
        t_max = t_max.max(r.time);
        let idx = j_index[&r.period] * n + p_index[&r.participant];
        let cell = cells[idx].get_or_insert_with(|| Cell {
            times: Vec::new(),
            y: Vec::new(),
            z: r.z.clone(),
            x: r.x.clone(),
        });
        if cell.z != r.z || cell.x != r.x {
            return Err(Error::data(format!(
                "covariates vary within participant {} period {}",
                r.participant, r.period
            )));
        }
        cell.times.push(r.time);
        cell.y.push(y);
    }

    let mut distinct: Vec<f64> = rows.iter().map(|r| r.time).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::data("fewer than 2 distinct time values"));
    }

    let time_map = if t_min >= 0.0 && t_max <= 1.0 {
        TimeMap::IDENTITY
    } else {
        TimeMap { offset: t_min, scale: t_max - t_min }
    };

    let mut out = Vec::with_capacity(cells.len());
    for (idx, cell) in cells.into_iter().enumerate() {
        let (j, i) = (idx / n, idx % n);
        let mut cell = cell.ok_or_else(|| {
            Error::data(format!("missing (i={}, j={})", participants[i], periods[j]))
        })?;
        for t in &mut cell.times {
            *t = time_map.to_internal(*t).clamp(0.0, 1.0);
        }
        out.push(cell);
    }

    Ok(PanelDataset {
        n,
        j: j_count,
        d_z,
        d_x,
        participant_ids: participants,
        period_ids: periods,
        cells: out,
        time_map,
    })
}

/// Prior covariance given either as `c · I` (dimension fixed by the data) or
/// as an explicit matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    ScaledIdentity(f64),
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    pub fn resolve(&self, dim: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            Covariance::ScaledIdentity(c) => DMatrix::identity(dim, dim) * *c,
            Covariance::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidHyper(format!("covariance must be {dim}x{dim}")));
                }
                DMatrix::from_fn(dim, dim, |r, c| rows[r][c])
            }
        };
        check_spd(&m)?;
        Ok(m)
    }
}

/// Prior mean given as a constant broadcast or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mean {
    Constant(f64),
    Vector(Vec<f64>),
}

impl Mean {
    pub fn resolve(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            Mean::Constant(c) => Ok(vec![*c; dim]),
            Mean::Vector(v) if v.len() == dim => Ok(v.clone()),
            Mean::Vector(v) => Err(Error::InvalidHyper(format!(
                "mean has length {}, expected {dim}",
                v.len()
            ))),
        }
    }
}

fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let sym = (m - m.transpose()).abs().max();
    if sym > 1e-10 * (1.0 + m.abs().max()) {
        return Err(Error::NotPositiveDefinite);
    }
    if m.nrows() > 0 && m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl McmcSettings {
    /// Number of draws kept after burn-in and thinning.
    pub fn retained(&self) -> usize {
        (self.iterations.saturating_sub(self.burn_in)) / self.thin.max(1)
    }

    /// Whether the (1-based) sweep `s` is kept.
    pub fn keeps(&self, s: usize) -> bool {
        s > self.burn_in && (s - self.burn_in).is_multiple_of(self.thin)
    }
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings { iterations: 5000, burn_in: 3000, thin: 10, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub variant: Variant,
    /// Spline basis dimension.
    pub q: usize,
    /// Within-period concentration.
    pub alpha: f64,
    /// Across-period concentration; only used by hierarchical variants.
    pub alpha0: Option<f64>,
    pub sigma_theta: Covariance,
    pub mu_eta: Mean,
    pub sigma_eta: Covariance,
    /// Auxiliary fresh dishes proposed in each reallocation.
    pub aux_dishes: usize,
    pub mcmc: McmcSettings,
    /// Share of retained draws used for WAIC.
    pub waic_fraction: f64,
}

/// Simulation-study defaults for `variant`.
pub fn default_hyperparameters(variant: Variant) -> Hyperparameters {
    Hyperparameters {
        variant,
        q: 10,
        alpha: 0.1,
        alpha0: variant.is_hierarchical().then_some(1.0),
        sigma_theta: Covariance::ScaledIdentity(1.0),
        mu_eta: Mean::Constant(0.0),
        sigma_eta: Covariance::ScaledIdentity(5.0),
        aux_dishes: 3,
        mcmc: McmcSettings::default(),
        waic_fraction: 0.10,
    }
}

/// Hyperparameters with priors resolved against the data dimensions.
#[derive(Debug, Clone)]
pub struct ResolvedPriors {
    pub sigma_theta: DMatrix<f64>,
    pub mu_eta: Vec<f64>,
    pub sigma_eta: DMatrix<f64>,
}

impl Hyperparameters {
    /// Validate scalar settings and resolve the prior matrices.
    pub fn validate(&self, d_z: usize, d_x: usize) -> Result<ResolvedPriors> {
        if self.q < 4 {
            return Err(Error::InvalidHyper(format!("q = {} but a cubic basis needs q >= 4", self.q)));
        }
        self.validate_priors(d_z, d_x)
    }

    /// [`Hyperparameters::validate`] without the spline-dimension check, for
    /// samplers run on a custom design.
    pub fn validate_priors(&self, d_z: usize, d_x: usize) -> Result<ResolvedPriors> {
        let bad = |m: String| Err(Error::InvalidHyper(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.variant.is_hierarchical() {
            match self.alpha0 {
                Some(a) if a > 0.0 && a.is_finite() => {}
                other => return bad(format!("alpha0 must be positive for {}, got {other:?}", self.variant)),
            }
        }
        if self.aux_dishes == 0 {
            return bad("aux_dishes must be at least 1".into());
        }
        let m = &self.mcmc;
        if m.thin == 0 {
            return bad("thin must be >= 1".into());
        }
        if m.burn_in >= m.iterations {
            return bad(format!("burn-in {} must be below iterations {}", m.burn_in, m.iterations));
        }
        if !(self.waic_fraction > 0.0 && self.waic_fraction <= 1.0) {
            return bad(format!("waic fraction must lie in (0, 1], got {}", self.waic_fraction));
        }
        if self.variant.is_temporal() && d_x == 0 {
            return bad(format!("variant {} needs transition covariates (x columns)", self.variant));
        }
        Ok(ResolvedPriors {
            sigma_theta: self.sigma_theta.resolve(d_z)?,
            mu_eta: self.mu_eta.resolve(d_x)?,
            sigma_eta: self.sigma_eta.resolve(d_x)?,
        })
    }
}
