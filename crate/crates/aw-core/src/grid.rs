//! The quantization map: exponent `r`, uniform cell partitions of `[0,1]^d`,
//! cell centers, and averaged kernels conditioned on cell blocks.
//!
//! With `m` cells per dimension the partition is exact (`m * (1/m) = 1` by
//! construction of the boundaries `k/m`), every point maps to exactly one
//! cell, `x = 1` joins the last cell, and the displacement to the center is at
//! most `sqrt(d)/(2m)` in Euclidean norm. The crate realizes the diameter
//! constant as `sqrt(d)` and the displacement constant as `sqrt(d)/2`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::measures::{Path, PathMeasure, ProcessShape};
use crate::transport::DiscreteDistribution;

/// Which estimator family the exponent `r` serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridMode {
    /// `r = 1/(T+1)` for `d = 1`, `r = 1/(dT)` for `d >= 2`.
    General,
    /// `r = 1/3` for `d = 1`, `r = 1/(2d)` for `d >= 2`.
    Markov,
}

/// Exponent `r` as an exact rational `1/denominator`.
pub fn derive_r(shape: ProcessShape, mode: GridMode) -> (u64, u64) {
    let denom = match mode {
        GridMode::General => {
            if shape.d() == 1 {
                shape.t() as u64 + 1
            } else {
                (shape.d() * shape.t()) as u64
            }
        }
        GridMode::Markov => {
            if shape.d() == 1 {
                3
            } else {
                2 * shape.d() as u64
            }
        }
    };
    (1, denom)
}

/// Smallest `m >= 1` with `m^denom >= n`, i.e. `ceil(n^(1/denom))`, computed in
/// integer arithmetic so boundary cases never depend on float rounding.
fn ceil_root(n: u64, denom: u64) -> u64 {
    if n <= 1 {
        return 1;
    }
    let hint = math::powf(n as f64, 1.0 / denom as f64);
    let mut m = if hint.is_finite() && hint >= 1.0 {
        (hint as u64).saturating_sub(2).max(1)
    } else {
        1
    };
    while !pow_at_least(m, denom, n) {
        m += 1;
    }
    m
}

/// `m^denom >= n`, saturating on overflow.
fn pow_at_least(m: u64, denom: u64, n: u64) -> bool {
    let mut acc: u128 = 1;
    for _ in 0..denom {
        acc = acc.saturating_mul(m as u128);
        if acc >= n as u128 {
            return true;
        }
    }
    acc >= n as u128
}

/// The index of the cell containing a point: one integer in `[0, m)` per
/// dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId(pub Vec<u32>);

/// The quantization map for a sample size `N`: `m = ceil(N^r)` cells of edge
/// `1/m` per dimension, each mapped to its center.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    shape: ProcessShape,
    n_samples: u64,
    r_denom: u64,
    m: u64,
    mode: GridMode,
}

impl GridSpec {
    pub fn new(shape: ProcessShape, n_samples: u64, mode: GridMode) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::InvalidParameter("sample size must be positive".into()));
        }
        let (_, denom) = derive_r(shape, mode);
        let m = ceil_root(n_samples, denom);
        Ok(Self {
            shape,
            n_samples,
            r_denom: denom,
            m,
            mode,
        })
    }

    /// Overrides the cell count per dimension. No rate theory is asserted for
    /// overridden grids; this exists for experimentation and for building
    /// reference discretizations.
    pub fn with_cells(shape: ProcessShape, m: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("cell count must be positive".into()));
        }
        Ok(Self {
            shape,
            n_samples: 0,
            r_denom: 0,
            m,
            mode: GridMode::General,
        })
    }

    pub fn shape(&self) -> ProcessShape {
        self.shape
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn sample_size(&self) -> u64 {
        self.n_samples
    }

    /// The exponent as `(numerator, denominator)`; numerator is always 1.
    /// Zero denominator marks an overridden grid.
    pub fn r(&self) -> (u64, u64) {
        (1, self.r_denom)
    }

    /// Cells per dimension.
    pub fn cells_per_dim(&self) -> u64 {
        self.m
    }

    /// Edge length of one cell.
    pub fn edge(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Euclidean bound on the displacement `|x - center|`, i.e.
    /// `sqrt(d)/(2m)`.
    pub fn displacement_bound(&self) -> f64 {
        math::sqrt(self.shape.d() as f64) / (2.0 * self.m as f64)
    }

    /// Classifies one point. The right boundary joins the last cell.
    pub fn quantize(&self, x: &[f64]) -> Result<(CellId, Vec<f64>)> {
        if x.len() != self.shape.d() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "point of dimension {}, grid expects {}",
                x.len(),
                self.shape.d()
            )));
        }
        let mut id = Vec::with_capacity(x.len());
        let mut center = Vec::with_capacity(x.len());
        for (dim, &c) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::CoordinateOutOfRange {
                    step: 0,
                    dim: dim + 1,
                    value: c,
                });
            }
            let k = ((c * self.m as f64) as u64).min(self.m - 1);
            id.push(k as u32);
            center.push((k as f64 + 0.5) / self.m as f64);
        }
        Ok((CellId(id), center))
    }

    /// Center of a cell.
    pub fn cell_center(&self, id: &CellId) -> Vec<f64> {
        id.0.iter()
            .map(|&k| (k as f64 + 0.5) / self.m as f64)
            .collect()
    }

    /// Applies [`GridSpec::quantize`] at every time step.
    pub fn quantize_path(&self, p: &Path) -> Result<Path> {
        let mut coords = Vec::with_capacity(p.coords().len());
        for step in p.steps() {
            let (_, center) = self.quantize(step)?;
            coords.extend_from_slice(&center);
        }
        Path::new(self.shape, coords)
    }

    /// Cell ids of the first `t` steps of a path.
    pub fn cell_prefix(&self, p: &Path, t: usize) -> Result<Vec<CellId>> {
        (1..=t).map(|s| Ok(self.quantize(p.step(s))?.0)).collect()
    }
}

/// Certified transport budget of a `cells`-per-dimension discretization:
/// `T * (sqrt(d)/2) / cells`, the displacement bound summed over steps.
pub fn quantization_budget(shape: ProcessShape, cells: u64) -> f64 {
    shape.t() as f64 * math::sqrt(shape.d() as f64) / (2.0 * cells as f64)
}

/// The averaged kernel: the conditional law of step `t+1` given that the
/// length-`t` prefix lies in the cell block `g` (one [`CellId`] per step),
/// renormalized. A zero-mass conditioning event returns the Dirac at the
/// origin, matching the division-by-zero convention used throughout.
pub fn averaged_kernel(
    m: &PathMeasure,
    t: usize,
    g: &[CellId],
    grid: &GridSpec,
) -> Result<DiscreteDistribution> {
    let shape = m.shape();
    if t == 0 || t >= shape.t() {
        return Err(Error::InvalidParameter(alloc::format!(
            "averaged kernel needs 1 <= t <= T-1, got t = {t}"
        )));
    }
    if g.len() != t {
        return Err(Error::DimensionMismatch(alloc::format!(
            "cell block of length {}, expected t = {}",
            g.len(),
            t
        )));
    }
    let d = shape.d();
    let mut points: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (path, w) in m.atoms() {
        let mut inside = true;
        for s in 1..=t {
            let (cell, _) = grid.quantize(path.step(s))?;
            if cell != g[s - 1] {
                inside = false;
                break;
            }
        }
        if inside {
            points.extend_from_slice(path.step(t + 1));
            weights.push(*w);
        }
    }
    if weights.is_empty() {
        return DiscreteDistribution::dirac(alloc::vec![0.0; d]);
    }
    DiscreteDistribution::new(d, points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::PathMeasure;

    fn shape(d: usize, t: usize) -> ProcessShape {
        ProcessShape::new(d, t).unwrap()
    }

    #[test]
    fn exponents_match_the_two_case_formulas() {
        assert_eq!(derive_r(shape(1, 2), GridMode::General), (1, 3));
        assert_eq!(derive_r(shape(2, 3), GridMode::General), (1, 6));
        assert_eq!(derive_r(shape(1, 7), GridMode::Markov), (1, 3));
        assert_eq!(derive_r(shape(3, 2), GridMode::Markov), (1, 6));
    }

    #[test]
    fn cell_counts_are_exact_ceilings() {
        // N = 8, r = 1/3: exactly two cells.
        let g = GridSpec::new(shape(1, 2), 8, GridMode::General).unwrap();
        assert_eq!(g.cells_per_dim(), 2);
        // N = 9 needs a third cell only at 27.
        assert_eq!(
            GridSpec::new(shape(1, 2), 9, GridMode::General).unwrap().cells_per_dim(),
            3
        );
        assert_eq!(
            GridSpec::new(shape(1, 2), 27, GridMode::General).unwrap().cells_per_dim(),
            3
        );
        assert_eq!(
            GridSpec::new(shape(1, 2), 28, GridMode::General).unwrap().cells_per_dim(),
            4
        );
        assert_eq!(
            GridSpec::new(shape(1, 2), 1, GridMode::General).unwrap().cells_per_dim(),
            1
        );
    }

    #[test]
    fn quantize_figure_two_parameters() {
        let g = GridSpec::new(shape(1, 2), 8, GridMode::General).unwrap();
        let (cell, center) = g.quantize(&[0.3]).unwrap();
        assert_eq!(cell, CellId(alloc::vec![0]));
        assert_eq!(center, alloc::vec![0.25]);
    }

    #[test]
    fn right_boundary_joins_the_last_cell() {
        let g = GridSpec::new(shape(1, 2), 8, GridMode::General).unwrap();
        let (cell, center) = g.quantize(&[1.0]).unwrap();
        assert_eq!(cell, CellId(alloc::vec![1]));
        assert_eq!(center, alloc::vec![0.75]);
    }

    #[test]
    fn quantize_applies_per_coordinate() {
        let g = GridSpec::with_cells(shape(2, 1), 2).unwrap();
        let (cell, center) = g.quantize(&[0.1, 0.9]).unwrap();
        assert_eq!(cell, CellId(alloc::vec![0, 1]));
        assert_eq!(center, alloc::vec![0.25, 0.75]);
    }

    #[test]
    fn quantize_rejects_outside_points() {
        let g = GridSpec::with_cells(shape(1, 1), 4).unwrap();
        assert!(matches!(
            g.quantize(&[1.000001]),
            Err(Error::CoordinateOutOfRange { .. })
        ));
    }

    #[test]
    fn quantize_path_snaps_every_step() {
        let g = GridSpec::new(shape(1, 2), 8, GridMode::General).unwrap();
        let p = Path::new(shape(1, 2), alloc::vec![0.3, 0.9]).unwrap();
        assert_eq!(g.quantize_path(&p).unwrap().coords(), &[0.25, 0.75]);
    }

    #[test]
    fn quantize_is_idempotent_on_centers() {
        for m in [1u64, 2, 3, 7, 21] {
            let g = GridSpec::with_cells(shape(1, 1), m).unwrap();
            for k in 0..m {
                let center = (k as f64 + 0.5) / m as f64;
                let (cell, snapped) = g.quantize(&[center]).unwrap();
                assert_eq!(cell.0[0] as u64, k);
                assert_eq!(snapped[0], center);
            }
        }
    }

    #[test]
    fn displacement_stays_within_the_bound() {
        let g = GridSpec::with_cells(shape(2, 1), 3).unwrap();
        let bound = g.displacement_bound();
        let mut x = 0.0;
        while x <= 1.0 {
            let mut y = 0.0;
            while y <= 1.0 {
                let (_, c) = g.quantize(&[x, y]).unwrap();
                let dist = ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt();
                assert!(dist <= bound + 1e-15);
                y += 0.01;
            }
            x += 0.01;
        }
    }

    fn kernel_measure() -> PathMeasure {
        PathMeasure::from_rows(
            shape(1, 2),
            alloc::vec![
                (alloc::vec![0.1, 0.9], 0.2),
                (alloc::vec![0.2, 0.3], 0.6),
                (alloc::vec![0.8, 0.5], 0.2),
            ],
        )
        .unwrap()
    }

    #[test]
    fn averaged_kernel_renormalizes_the_restriction() {
        let g = GridSpec::with_cells(shape(1, 2), 2).unwrap();
        // Prefixes 0.1 and 0.2 share cell 0 with masses 0.2 and 0.6; the
        // renormalized successors carry 0.25 and 0.75.
        let k = averaged_kernel(&kernel_measure(), 1, &[CellId(alloc::vec![0])], &g).unwrap();
        assert_eq!(k.len(), 2);
        assert_eq!(k.point(0), &[0.3]);
        assert!((k.weight(0) - 0.75).abs() < 1e-15);
        assert_eq!(k.point(1), &[0.9]);
        assert!((k.weight(1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn averaged_kernel_of_a_single_cell_is_unchanged() {
        let g = GridSpec::with_cells(shape(1, 2), 2).unwrap();
        let k = averaged_kernel(&kernel_measure(), 1, &[CellId(alloc::vec![1])], &g).unwrap();
        assert_eq!(k.len(), 1);
        assert_eq!(k.point(0), &[0.5]);
        assert_eq!(k.weight(0), 1.0);
    }

    #[test]
    fn zero_mass_block_returns_dirac_at_origin() {
        let m = PathMeasure::from_rows(shape(1, 2), alloc::vec![(alloc::vec![0.1, 0.9], 1.0)])
            .unwrap();
        let g = GridSpec::with_cells(shape(1, 2), 2).unwrap();
        let k = averaged_kernel(&m, 1, &[CellId(alloc::vec![1])], &g).unwrap();
        assert_eq!(k.len(), 1);
        assert_eq!(k.point(0), &[0.0]);
        assert_eq!(k.weight(0), 1.0);
    }
}
