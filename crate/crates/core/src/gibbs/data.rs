use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PanelDataset;
use crate::spline::{SparseRow, SplineBasis};

/// Observations of one participant in one period, with the spline design
/// already evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCell {
    pub rows: Vec<SparseRow>,
    pub y: Vec<u8>,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
}

/// Sampler-ready data, cells in period-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitData {
    pub n: usize,
    pub periods: usize,
    pub q: usize,
    pub d_z: usize,
    pub d_x: usize,
    pub cells: Vec<FitCell>,
}

impl FitData {
    pub fn from_panel(data: &PanelDataset, basis: &SplineBasis) -> Result<Self> {
        let cells = data
            .cells
            .iter()
            .map(|c| {
                Ok(FitCell { rows: basis.design_rows(&c.times)?, y: c.y.clone(), z: c.z.clone(), x: c.x.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_cells(data.n, data.j, basis.q(), data.d_z, data.d_x, cells)
    }

    /// Assemble from arbitrary cells. Cells may be empty and the design may
    /// be any sparse design with `q` columns.
    pub fn from_cells(
        n: usize,
        periods: usize,
        q: usize,
        d_z: usize,
        d_x: usize,
        cells: Vec<FitCell>,
    ) -> Result<Self> {
        if cells.len() != n * periods {
            return Err(Error::data(format!("expected {} cells, got {}", n * periods, cells.len())));
        }
        for c in &cells {
            if c.rows.len() != c.y.len() || c.z.len() != d_z || c.x.len() != d_x {
                return Err(Error::data("cell dimensions disagree"));
            }
            if c.rows.iter().any(|r| r.start as usize + r.len as usize > q) {
                return Err(Error::data("design row exceeds basis dimension"));
            }
            if c.y.iter().any(|&y| y > 1) {
                return Err(Error::data("non-binary outcome"));
            }
        }
        Ok(FitData { n, periods, q, d_z, d_x, cells })
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> &FitCell {
        &self.cells[j * self.n + i]
    }
}
