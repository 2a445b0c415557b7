//! Whole-space clusterings as labeled probability grids and the distance in
//! measure between two of them.

mod assignment;
mod grid;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::kernels::BandwidthMatrix;
use crate::meanshift::{ClusterResult, MeanShift, MeanShiftConfig, ShiftDensity};
use crate::models::Density;

pub use assignment::assignment;
pub use grid::{build_grid, cell_masses, GridSpec, MIN_RECTANGLE_MASS};

/// A clustering of the rectangle: one label and one probability mass per
/// grid cell.
///
/// Labels need not be contiguous; clusters with no cells count as empty sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacePartition {
    grid: GridSpec,
    labels: Vec<usize>,
    masses: Vec<f64>,
}

impl SpacePartition {
    pub fn new(grid: GridSpec, labels: Vec<usize>, masses: Vec<f64>) -> Result<Self> {
        if labels.len() != grid.len() || masses.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "grid has {} cells but {} labels and {} masses",
                grid.len(),
                labels.len(),
                masses.len()
            )));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid cell mass {m}")));
        }
        let total: f64 = masses.iter().sum();
        if total > 1.0 + 1e-6 {
            return Err(Error::InvalidArgument(format!("cell masses sum to {total} > 1")));
        }
        Ok(Self {
            grid,
            labels,
            masses,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Size of the label range `0..=max label`.
    pub fn n_labels(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Number of labels carried by at least one cell.
    pub fn n_clusters(&self) -> usize {
        let mut seen = vec![false; self.n_labels()];
        self.labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|s| **s).count()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `P(C_l)` for every label.
    pub fn cluster_masses(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_labels()];
        for (l, m) in self.labels.iter().zip(&self.masses) {
            out[*l] += m;
        }
        out
    }

    /// Writes `x1..xd,label,mass`, one grid point per row in grid order.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.grid.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        header.push("label".into());
        header.push("mass".into());
        w.write_record(&header)?;
        for i in 0..self.grid.len() {
            let mut rec: Vec<String> = self.grid.point(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            rec.push(self.masses[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }

    /// Reads the format written by [`SpacePartition::to_csv_writer`],
    /// recovering the grid from the coordinates.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let d = r.headers()?.len().checked_sub(2).filter(|d| *d > 0).ok_or_else(|| {
            Error::InvalidArgument("partition CSV needs x1..xd, label and mass columns".into())
        })?;
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        let mut masses = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::InvalidArgument(format!("line {}: bad {what}", line + 2));
            for k in 0..d {
                coords.push(rec[k].trim().parse::<f64>().map_err(|_| bad("coordinate"))?);
            }
            labels.push(rec[d].trim().parse::<usize>().map_err(|_| bad("label"))?);
            masses.push(rec[d + 1].trim().parse::<f64>().map_err(|_| bad("mass"))?);
        }
        let n = labels.len();
        let res = (n as f64).powf(1.0 / d as f64).round() as usize;
        if res < 2 || res.pow(d as u32) != n {
            return Err(Error::GridMismatch(format!("{n} rows do not form a {d}-dimensional grid")));
        }
        let lo: Vec<f64> = coords[..d].to_vec();
        let hi: Vec<f64> = coords[(n - 1) * d..].to_vec();
        let grid = GridSpec::new(lo, hi, res)?;
        for i in 0..n {
            let p = grid.point(i);
            for k in 0..d {
                let tol = 1e-9 * (grid.hi[k] - grid.lo[k]);
                if (p[k] - coords[i * d + k]).abs() > tol {
                    return Err(Error::GridMismatch(format!(
                        "row {} is not on a regular grid in grid order",
                        i + 2
                    )));
                }
            }
        }
        Self::new(grid, labels, masses)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }
}

/// Labels every grid point by data-based mean shift under `h`.
///
/// Cell masses come from `truth` when given (simulation) and from the kernel
/// density estimate otherwise.
pub fn label_grid(
    grid: &GridSpec,
    data: &DataSet,
    h: &BandwidthMatrix,
    cfg: &MeanShiftConfig,
    truth: Option<&dyn Density>,
) -> Result<(SpacePartition, ClusterResult)> {
    if grid.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            found: data.dim(),
        });
    }
    let ms = MeanShift::new(data, h, cfg)?;
    let result = ms.cluster(&grid.points())?;
    let (masses, _) = match truth {
        Some(t) => cell_masses(t, grid)?,
        None => cell_masses(&ShiftDensity(&ms), grid)?,
    };
    let partition = SpacePartition::new(grid.clone(), result.labels.clone(), masses)?;
    Ok((partition, result))
}

/// Outcome of matching the clusters of two partitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// `1/2 min_sigma sum_i P(C_i sym-diff D_sigma(i))`.
    pub distance: f64,
    /// `permutation[i]` is the cluster of the second partition matched to
    /// cluster `i` of the first, over the padded index set.
    pub permutation: Vec<usize>,
    /// `P(C_i sym-diff D_permutation[i])`.
    pub pair_masses: Vec<f64>,
    pub clusters_a: usize,
    pub clusters_b: usize,
    pub total_mass: f64,
    pub leakage: f64,
    pub resolution: usize,
}

impl DistanceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Overlap masses `P(C_i and D_j)` on the padded `s x s` index set, row-major.
pub fn overlap_matrix(a: &SpacePartition, b: &SpacePartition) -> Result<(Vec<f64>, usize)> {
    check_same_grid(a, b)?;
    let s = a.n_labels().max(b.n_labels());
    let mut overlap = vec![0.0; s * s];
    for i in 0..a.labels.len() {
        overlap[a.labels[i] * s + b.labels[i]] += a.masses[i];
    }
    Ok((overlap, s))
}

fn check_same_grid(a: &SpacePartition, b: &SpacePartition) -> Result<()> {
    if !a.grid.same_as(&b.grid) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid, b.grid)));
    }
    for (ma, mb) in a.masses.iter().zip(&b.masses) {
        if (ma - mb).abs() > 1e-12 * ma.abs().max(mb.abs()).max(1e-300) {
            return Err(Error::GridMismatch("cell masses differ".into()));
        }
    }
    Ok(())
}

/// The distance in measure, padding the partition with fewer labels by empty
/// clusters and matching clusters by linear sum assignment.
pub fn distance_in_measure(a: &SpacePartition, b: &SpacePartition) -> Result<DistanceReport> {
    let (overlap, s) = overlap_matrix(a, b)?;
    let mut pa = vec![0.0; s];
    let mut pb = vec![0.0; s];
    for i in 0..s {
        for j in 0..s {
            pa[i] += overlap[i * s + j];
            pb[j] += overlap[i * s + j];
        }
    }
    let mut cost = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..s {
            cost[i * s + j] = (pa[i] + pb[j] - 2.0 * overlap[i * s + j]).max(0.0);
        }
    }
    let (permutation, total) = assignment(&cost, s)?;
    let pair_masses = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * s + j])
        .collect();
    let total_mass = a.total_mass();
    Ok(DistanceReport {
        distance: 0.5 * total,
        permutation,
        pair_masses,
        clusters_a: a.n_clusters(),
        clusters_b: b.n_clusters(),
        total_mass,
        leakage: 1.0 - total_mass,
        resolution: a.grid.resolution,
    })
}
