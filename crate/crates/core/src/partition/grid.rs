use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::models::{Density, Model};
use crate::quadrature::KahanSum;

/// A regular grid of `resolution^d` points over a rectangle.
///
/// Points are ordered with the first coordinate varying slowest. The cell of a
/// grid point extends half a spacing to each side, clipped at the rectangle,
/// so boundary cells are half cells and the cells tile the rectangle exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
}

/// Minimum model mass a model-built rectangle must hold.
pub const MIN_RECTANGLE_MASS: f64 = 0.999;
/// Standard deviations added around each model part.
const BOX_SDS: f64 = 5.0;
/// Points per coordinate of the trapezoid rule used for the mass check.
const CHECK_RESOLUTION: usize = 401;
const MAX_EXPANSIONS: usize = 3;

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidArgument(format!(
                "rectangle bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if resolution < 2 {
            return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi, resolution })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, k: usize) -> f64 {
        (self.hi[k] - self.lo[k]) / (self.resolution - 1) as f64
    }

    /// Per-coordinate grid indices of flat index `i`.
    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = i % self.resolution;
            i /= self.resolution;
        }
        idx
    }

    pub fn coordinate(&self, k: usize, i: usize) -> f64 {
        if i + 1 == self.resolution {
            self.hi[k]
        } else {
            self.lo[k] + i as f64 * self.spacing(k)
        }
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(k, &j)| self.coordinate(k, j))
            .collect()
    }

    /// All grid points as a data set.
    pub fn points(&self) -> DataSet {
        let mut flat = Vec::with_capacity(self.len() * self.dim());
        for i in 0..self.len() {
            flat.extend(self.point(i));
        }
        DataSet::new(self.dim(), flat).expect("finite grid")
    }

    /// Volume of the (possibly clipped) cell around grid point `i`.
    pub fn cell_volume(&self, i: usize) -> f64 {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let h = self.spacing(k);
                if j == 0 || j + 1 == self.resolution {
                    0.5 * h
                } else {
                    h
                }
            })
            .product()
    }

    /// Largest interior cell volume.
    pub fn max_cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).product()
    }

    /// Same rectangle at another resolution.
    pub fn with_resolution(&self, resolution: usize) -> Result<Self> {
        Self::new(self.lo.clone(), self.hi.clone(), resolution)
    }

    /// `sum_i w(x_i) vol_i` over this grid, a tensor trapezoid rule.
    pub fn integrate<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> f64 {
        let parts: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| f(&self.point(i)) * self.cell_volume(i))
            .collect();
        let mut acc = KahanSum::new();
        parts.iter().for_each(|v| acc.add(*v));
        acc.value()
    }

    pub(crate) fn same_as(&self, other: &GridSpec) -> bool {
        self.resolution == other.resolution
            && self.dim() == other.dim()
            && (0..self.dim()).all(|k| {
                let tol = 1e-12 * (self.hi[k] - self.lo[k]);
                (self.lo[k] - other.lo[k]).abs() <= tol && (self.hi[k] - other.hi[k]).abs() <= tol
            })
    }
}

/// Rectangle spanning the model parts plus five standard deviations, expanded
/// by 25% per side (up to three times) until it holds `MIN_RECTANGLE_MASS`.
pub fn build_grid(model: &Model, resolution: usize) -> Result<GridSpec> {
    let (mut lo, mut hi) = model.bounding_box(BOX_SDS);
    for attempt in 0..=MAX_EXPANSIONS {
        let check = GridSpec::new(lo.clone(), hi.clone(), CHECK_RESOLUTION)?;
        let mass = check.integrate(|x| Density::density(model, x));
        if mass >= MIN_RECTANGLE_MASS {
            return GridSpec::new(lo, hi, resolution);
        }
        if attempt == MAX_EXPANSIONS {
            return Err(Error::Numerical(format!(
                "rectangle holds mass {mass} after {MAX_EXPANSIONS} expansions"
            )));
        }
        for k in 0..lo.len() {
            let w = 0.25 * (hi[k] - lo[k]);
            lo[k] -= w;
            hi[k] += w;
        }
    }
    unreachable!()
}

/// Cell masses `f(x_i) vol_i` and their compensated total. The masses are not
/// renormalised; `1 - total` is the leakage outside the rectangle.
pub fn cell_masses<D: Density + ?Sized>(density: &D, grid: &GridSpec) -> Result<(Vec<f64>, f64)> {
    if density.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: density.dim(),
        });
    }
    let masses: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| density.density(&grid.point(i)) * grid.cell_volume(i))
        .collect();
    let mut total = KahanSum::new();
    masses.iter().for_each(|m| total.add(*m));
    Ok((masses, total.value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Component, MixtureModel};

    fn normal() -> Model {
        Model::Mixture(
            MixtureModel::new(vec![Component {
                weight: 1.0,
                mean: vec![0.0, 0.0],
                covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            }])
            .unwrap(),
        )
    }

    #[test]
    fn ordering_first_coordinate_slowest() {
        let g = GridSpec::new(vec![0.0, 10.0], vec![1.0, 12.0], 3).unwrap();
        assert_eq!(g.point(0), vec![0.0, 10.0]);
        assert_eq!(g.point(1), vec![0.0, 11.0]);
        assert_eq!(g.point(3), vec![0.5, 10.0]);
        assert_eq!(g.point(8), vec![1.0, 12.0]);
    }

    #[test]
    fn cells_tile_the_rectangle() {
        let g = GridSpec::new(vec![-1.0, 0.0], vec![2.0, 5.0], 7).unwrap();
        let total: f64 = (0..g.len()).map(|i| g.cell_volume(i)).sum();
        assert!((total - 15.0).abs() < 1e-12);
    }

    #[test]
    fn standard_normal_rectangle() {
        let g = build_grid(&normal(), 60).unwrap();
        for k in 0..2 {
            assert!(g.lo[k] <= -3.3 && g.hi[k] >= 3.3);
        }
        let g2 = build_grid(&normal(), 120).unwrap();
        assert_eq!((g.lo.clone(), g.hi.clone()), (g2.lo, g2.hi));
        let (_, total) = cell_masses(&normal(), &g).unwrap();
        assert!(total > 0.999 && total < 1.001, "{total}");
    }

    #[test]
    fn rejects_degenerate_rectangles() {
        assert!(GridSpec::new(vec![0.0], vec![0.0], 5).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], 1).is_err());
        assert!(GridSpec::new(vec![0.0, 1.0], vec![1.0], 5).is_err());
    }
}
