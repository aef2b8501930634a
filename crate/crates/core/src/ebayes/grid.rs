//! Support grid for the discrete priors.

use super::{cells_from_table, CellObs};
use crate::error::{Error, Result};
use crate::table::{BaselineMatrix, ContingencyTable};

/// Smallest grid point; stands in for `λ = 0`, which a Poisson mean cannot
/// take when the cell has reports.
const LOWER_FLOOR: f64 = 1e-4;

/// Grid of at most `k` points for [`fit_km`](super::fit_km) and
/// [`fit_efron`](super::fit_efron), from the cells of `table`.
pub fn select_grid(table: &ContingencyTable, baseline: &BaselineMatrix, k: usize) -> Result<Vec<f64>> {
    select_grid_cells(&cells_from_table(table, baseline)?, k)
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Histogram-equalised grid: the range runs from
/// `max(1e-4, min N/E)` to twice the 0.999 quantile of `N/E`; interior
/// points sit at equally spaced quantiles of the positive ratios; the lower
/// end, 1 and the upper end are always included. Duplicates are removed,
/// so fewer than `k` points can come back.
pub fn select_grid_cells(cells: &[CellObs], k: usize) -> Result<Vec<f64>> {
    if k < 10 {
        return Err(Error::InvalidArgument(format!("grid size {k} is below 10")));
    }
    let mut ratios: Vec<f64> = cells.iter().filter(|c| c.e > 0.0).map(|c| c.n as f64 / c.e).collect();
    if ratios.is_empty() {
        return Err(Error::GridFailure("no cell has a positive baseline".into()));
    }
    ratios.sort_by(f64::total_cmp);
    let lower = ratios[0].max(LOWER_FLOOR);
    let upper = (2.0 * quantile(&ratios, 0.999)).max(lower);
    let positive: Vec<f64> = ratios.iter().copied().filter(|&r| r > 0.0).collect();
    let mut grid = vec![lower, 1.0, upper];
    if !positive.is_empty() {
        let m = k - 3;
        grid.extend((1..=m).map(|i| quantile(&positive, i as f64 / (m + 1) as f64).clamp(lower, upper)));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    Ok(grid)
}
