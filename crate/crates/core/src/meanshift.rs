//! Data-based mean shift with an unconstrained bandwidth matrix.
//!
//! The update is `y <- sum_i w_i(y) X_i` with
//! `w_i(y) = g(M_H(y, X_i)) / sum_l g(M_H(y, X_l))`. For the Gaussian kernel
//! `g(u)` is proportional to `exp(-u / 2)`, so the weights are evaluated with
//! the smallest Mahalanobis distance shifted out of the exponent and stay
//! finite for points arbitrarily far from the data. The same pass yields
//! `log f_H(y)`, which is used to track the ascent of every trajectory.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{gaussian_normalizer, rescaled_kernel_unchecked, BandwidthMatrix};

/// Terms with `M_i - min M > SHIFT_CUTOFF` carry relative weight below
/// `exp(-40)` and are skipped in the iteration kernel.
const SHIFT_CUTOFF: f64 = 80.0;

/// Stopping and merging rules, with tolerances in Mahalanobis units under `H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanShiftConfig {
    /// Stop, keeping `y_j`, once `M_H(y_{j+1}, y_j) < step_tol^2`.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Limit points closer than `merge_tol` (Mahalanobis) share a mode.
    pub merge_tol: f64,
    /// Starting points with `f_H(y0)` below this fraction of the largest
    /// estimate over the data are flagged.
    pub density_floor: f64,
}

impl Default for MeanShiftConfig {
    fn default() -> Self {
        Self {
            step_tol: 1e-6,
            max_iter: 500,
            merge_tol: 1e-2,
            density_floor: 1e-12,
        }
    }
}

impl MeanShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_tol > 0.0) || !(self.merge_tol > 0.0) || self.step_tol >= self.merge_tol {
            return Err(Error::InvalidArgument(format!(
                "need 0 < step_tol ({}) < merge_tol ({})",
                self.step_tol, self.merge_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.density_floor >= 0.0) {
            return Err(Error::InvalidArgument("density_floor must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `f_H(x) = n^{-1} sum_i K_H(x - X_i)`.
pub fn kde(x: &[f64], data: &DataSet, h: &BandwidthMatrix) -> Result<f64> {
    check_dim(h.dim(), data.dim())?;
    check_dim(h.dim(), x.len())?;
    let mut diff = vec![0.0; x.len()];
    let mut total = 0.0;
    for row in data.rows() {
        for k in 0..x.len() {
            diff[k] = x[k] - row[k];
        }
        total += rescaled_kernel_unchecked(&diff, h);
    }
    Ok(total / data.len() as f64)
}

/// `D f_H(x) = -n^{-1} sum_i H^{-1} (x - X_i) K_H(x - X_i)`.
pub fn kde_gradient(x: &[f64], data: &DataSet, h: &BandwidthMatrix) -> Result<Vec<f64>> {
    check_dim(h.dim(), data.dim())?;
    check_dim(h.dim(), x.len())?;
    let d = x.len();
    let mut diff = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for row in data.rows() {
        for k in 0..d {
            diff[k] = x[k] - row[k];
        }
        let kv = rescaled_kernel_unchecked(&diff, h);
        for k in 0..d {
            acc[k] += kv * diff[k];
        }
    }
    let n = data.len() as f64;
    Ok(h.inv_mul(&acc).into_iter().map(|v| -v / n).collect())
}

/// Normalised mean shift weights `w_i(y)`; nonnegative, summing to one.
pub fn mean_shift_weights(y: &[f64], data: &DataSet, h: &BandwidthMatrix) -> Result<Vec<f64>> {
    check_dim(h.dim(), data.dim())?;
    check_dim(h.dim(), y.len())?;
    let d = y.len();
    let mut diff = vec![0.0; d];
    let m: Vec<f64> = data
        .rows()
        .map(|row| {
            for k in 0..d {
                diff[k] = y[k] - row[k];
            }
            h.inv_quad(&diff)
        })
        .collect();
    let min = m.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = m.iter().map(|v| (-0.5 * (v - min)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// One data-based mean shift update from `y`.
///
/// Fails with [`Error::DensityFloor`] when `f_H(y)` underflows to zero, i.e.
/// when every unnormalised weight `g(M_H(y, X_i))` vanishes in floating point.
pub fn mean_shift_step(y: &[f64], data: &DataSet, h: &BandwidthMatrix) -> Result<Vec<f64>> {
    check_dim(h.dim(), data.dim())?;
    check_dim(h.dim(), y.len())?;
    let engine = ShiftEngine::new(data, h);
    let mut out = vec![0.0; y.len()];
    let log_f = engine.step_into(y, &mut out);
    if log_f < f64::MIN_POSITIVE.ln() {
        return Err(Error::DensityFloor {
            point: y.to_vec(),
            log_density: log_f,
        });
    }
    Ok(out)
}

/// Iteration kernel shared by [`converge`] and [`cluster`].
struct ShiftEngine<'a> {
    data: &'a DataSet,
    h: &'a BandwidthMatrix,
    /// `log((2 pi)^{-d/2} |H|^{-1/2} / n)`.
    log_scale: f64,
    /// Upper factor `U` of `H^{-1} = U^T U` (bivariate case), entries
    /// `u00, u01, u11`, and the data mapped through it.
    whiten: [f64; 3],
    whitened: Vec<f64>,
}


impl<'a> ShiftEngine<'a> {
    fn new(data: &'a DataSet, h: &'a BandwidthMatrix) -> Self {
        let log_scale = gaussian_normalizer(h.dim()).ln()
            - 0.5 * h.determinant().ln()
            - (data.len() as f64).ln();
        let (whiten, whitened) = if h.dim() == 2 {
            let inv = h.inverse_entries();
            // H^{-1} = [[a, b], [b, c]] = U^T U with U = [[u00, u01], [0, u11]].
            let (a, b, c) = (inv[0], 0.5 * (inv[1] + inv[2]), inv[3]);
            let u00 = a.sqrt();
            let u01 = b / u00;
            let u11 = (c - u01 * u01).sqrt();
            let z = data
                .as_slice()
                .chunks_exact(2)
                .flat_map(|r| [u00 * r[0] + u01 * r[1], u11 * r[1]])
                .collect();
            ([u00, u01, u11], z)
        } else {
            ([0.0; 3], Vec::new())
        };
        Self {
            data,
            h,
            log_scale,
            whiten,
            whitened,
        }
    }

    /// Writes the update of `y` into `out` and returns `log f_H(y)`.
    fn step_into(&self, y: &[f64], out: &mut [f64]) -> f64 {
        let d = y.len();
        if d == 2 {
            return self.step_into_2d(y, out);
        }
        let pts = self.data.as_slice();
        let mut diff = vec![0.0; d];
        let mut min = f64::INFINITY;
        let dist: Vec<f64> = pts
            .chunks_exact(d)
            .map(|row| {
                for k in 0..d {
                    diff[k] = y[k] - row[k];
                }
                let q = self.h.inv_quad(&diff);
                min = min.min(q);
                q
            })
            .collect();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for (row, q) in pts.chunks_exact(d).zip(&dist) {
            let e = q - min;
            if e > SHIFT_CUTOFF {
                continue;
            }
            let w = (-0.5 * e).exp();
            total += w;
            for k in 0..d {
                out[k] += w * row[k];
            }
        }
        out.iter_mut().for_each(|v| *v /= total);
        self.log_scale - 0.5 * min + total.ln()
    }

    fn step_into_2d(&self, y: &[f64], out: &mut [f64]) -> f64 {
        let [u00, u01, u11] = self.whiten;
        let (w0, w1) = (u00 * y[0] + u01 * y[1], u11 * y[1]);
        let pts = self.data.as_slice();
        let mut min = f64::INFINITY;
        for z in self.whitened.chunks_exact(2) {
            let (u, v) = (w0 - z[0], w1 - z[1]);
            min = min.min(u * u + v * v);
        }
        let (mut s0, mut s1, mut total) = (0.0, 0.0, 0.0);
        for (row, z) in pts.chunks_exact(2).zip(self.whitened.chunks_exact(2)) {
            let (u, v) = (w0 - z[0], w1 - z[1]);
            let e = u * u + v * v - min;
            if e > SHIFT_CUTOFF {
                continue;
            }
            let w = (-0.5 * e).exp();
            total += w;
            s0 += w * row[0];
            s1 += w * row[1];
        }
        out[0] = s0 / total;
        out[1] = s1 / total;
        self.log_scale - 0.5 * min + total.ln()
    }
}

/// One mean shift trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Final point.
    pub mode: Vec<f64>,
    /// Number of updates applied.
    pub iterations: usize,
    /// `f_H(y_0), f_H(y_1), ...`, ending at `f_H(mode)`.
    pub densities: Vec<f64>,
    pub converged: bool,
    /// The start was below the density floor.
    pub low_density_start: bool,
}

impl Trajectory {
    /// `f_H(y_{j+1}) >= f_H(y_j) (1 - rel_tol)` for every consecutive pair.
    pub fn is_ascending(&self, rel_tol: f64) -> bool {
        self.densities
            .windows(2)
            .all(|w| w[1] >= w[0] - rel_tol * w[0])
    }
}

/// Labels, modes and per-point diagnostics for a batch of query points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// One merged mode per cluster, in label order.
    pub modes: Vec<Vec<f64>>,
    /// Label per query point; labels appear in first-occurrence order.
    pub labels: Vec<usize>,
    pub iterations: Vec<usize>,
    /// Whether each trajectory's density sequence was non-decreasing.
    pub ascent: Vec<bool>,
    pub converged: Vec<bool>,
    pub low_density_start: Vec<bool>,
}

impl ClusterResult {
    pub fn n_clusters(&self) -> usize {
        self.modes.len()
    }

    pub fn non_converged(&self) -> usize {
        self.converged.iter().filter(|c| !**c).count()
    }

    pub fn low_density_starts(&self) -> usize {
        self.low_density_start.iter().filter(|c| **c).count()
    }
}

/// Relative slack allowed in the ascent check.
pub const ASCENT_TOLERANCE: f64 = 1e-10;

/// Mean shift driver bound to a sample, bandwidth and configuration.
pub struct MeanShift<'a> {
    engine: ShiftEngine<'a>,
    cfg: MeanShiftConfig,
    log_floor: f64,
}

impl<'a> MeanShift<'a> {
    pub fn new(data: &'a DataSet, h: &'a BandwidthMatrix, cfg: &MeanShiftConfig) -> Result<Self> {
        cfg.validate()?;
        check_dim(h.dim(), data.dim())?;
        let engine = ShiftEngine::new(data, h);
        let mut scratch = vec![0.0; data.dim()];
        let max_log = data
            .rows()
            .map(|x| engine.step_into(x, &mut scratch))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            engine,
            cfg: cfg.clone(),
            log_floor: max_log + cfg.density_floor.ln(),
        })
    }

    /// Runs the iteration from `y0`, keeping the full density sequence.
    pub fn converge(&self, y0: &[f64]) -> Result<Trajectory> {
        check_dim(self.engine.h.dim(), y0.len())?;
        Ok(self.run(y0, true).0)
    }

    /// Returns the trajectory and whether its density sequence ascended.
    fn run(&self, y0: &[f64], record: bool) -> (Trajectory, bool) {
        let h = self.engine.h;
        let d = y0.len();
        let tol2 = self.cfg.step_tol * self.cfg.step_tol;
        let mut y = y0.to_vec();
        let mut next = vec![0.0; d];
        let mut diff = vec![0.0; d];
        let mut log_f = self.engine.step_into(&y, &mut next);
        let low_density_start = log_f < self.log_floor;
        let mut densities = Vec::new();
        if record {
            densities.push(log_f.exp());
        }
        let mut ascending = true;
        let mut converged = false;
        let mut iterations = 0;
        loop {
            for k in 0..d {
                diff[k] = next[k] - y[k];
            }
            if h.inv_quad(&diff) < tol2 {
                converged = true;
                break;
            }
            if iterations == self.cfg.max_iter {
                break;
            }
            std::mem::swap(&mut y, &mut next);
            iterations += 1;
            let prev = log_f;
            log_f = self.engine.step_into(&y, &mut next);
            // log f_{j+1} >= log f_j + log(1 - tol) <=> f_{j+1} >= f_j (1 - tol).
            if log_f < prev + (-ASCENT_TOLERANCE).ln_1p() && prev.exp() > 0.0 {
                ascending = false;
            }
            if record {
                densities.push(log_f.exp());
            }
        }
        let t = Trajectory {
            mode: y,
            iterations,
            densities,
            converged,
            low_density_start,
        };
        (t, ascending)
    }

    /// Converges every query point and merges limit points into modes.
    pub fn cluster(&self, query: &DataSet) -> Result<ClusterResult> {
        check_dim(self.engine.h.dim(), query.dim())?;
        let runs: Vec<(Trajectory, bool)> = (0..query.len())
            .into_par_iter()
            .map(|i| self.run(query.row(i), false))
            .collect();
        let (labels, modes) = label_limits(&runs, self.engine.h, self.cfg.merge_tol);
        Ok(ClusterResult {
            modes,
            labels,
            iterations: runs.iter().map(|(t, _)| t.iterations).collect(),
            ascent: runs.iter().map(|(_, a)| *a).collect(),
            converged: runs.iter().map(|(t, _)| t.converged).collect(),
            low_density_start: runs.iter().map(|(t, _)| t.low_density_start).collect(),
        })
    }
}

/// Merges the limits of converged trajectories by single linkage; every
/// non-converged trajectory takes the mode nearest (Mahalanobis) to its
/// final point. Labels are renumbered in first-occurrence order.
fn label_limits(
    runs: &[(Trajectory, bool)],
    h: &BandwidthMatrix,
    merge_tol: f64,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut members: Vec<usize> = (0..runs.len()).filter(|&i| runs[i].0.converged).collect();
    if members.is_empty() {
        members = (0..runs.len()).collect();
    }
    let limits: Vec<&[f64]> = members.iter().map(|&i| runs[i].0.mode.as_slice()).collect();
    let (merged, first) = merge_single_linkage(&limits, h, merge_tol);
    let centers: Vec<&[f64]> = first.iter().map(|&k| limits[k]).collect();
    let mut raw = vec![usize::MAX; runs.len()];
    for (k, &i) in members.iter().enumerate() {
        raw[i] = merged[k];
    }
    let mut diff = vec![0.0; h.dim()];
    for (i, label) in raw.iter_mut().enumerate() {
        if *label != usize::MAX {
            continue;
        }
        let y = &runs[i].0.mode;
        let mut best = (f64::INFINITY, 0);
        for (c, m) in centers.iter().enumerate() {
            for k in 0..diff.len() {
                diff[k] = y[k] - m[k];
            }
            let q = h.inv_quad(&diff);
            if q < best.0 {
                best = (q, c);
            }
        }
        *label = best.1;
    }
    let mut order = vec![usize::MAX; centers.len()];
    let mut modes = Vec::new();
    let labels = raw
        .iter()
        .map(|&l| {
            if order[l] == usize::MAX {
                order[l] = modes.len();
                modes.push(centers[l].to_vec());
            }
            order[l]
        })
        .collect();
    (labels, modes)
}

/// The kernel density estimate behind a [`MeanShift`], for cell masses.
pub(crate) struct ShiftDensity<'a, 'b>(pub &'b MeanShift<'a>);

impl crate::models::Density for ShiftDensity<'_, '_> {
    fn dim(&self) -> usize {
        self.0.engine.h.dim()
    }

    fn density(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; x.len()];
        self.0.engine.step_into(x, &mut scratch).exp()
    }
}

/// Iterates mean shift from `y0` until the step is below `cfg.step_tol` or the
/// iteration budget runs out (reported through `converged`).
pub fn converge(
    y0: &[f64],
    data: &DataSet,
    h: &BandwidthMatrix,
    cfg: &MeanShiftConfig,
) -> Result<Trajectory> {
    MeanShift::new(data, h, cfg)?.converge(y0)
}

/// Clusters `query` by the modes its mean shift trajectories reach.
pub fn cluster(
    query: &DataSet,
    data: &DataSet,
    h: &BandwidthMatrix,
    cfg: &MeanShiftConfig,
) -> Result<ClusterResult> {
    MeanShift::new(data, h, cfg)?.cluster(query)
}

/// Single-linkage merge of points whose Mahalanobis distance under `h` is
/// below `tol`. Returns labels canonicalised by first occurrence and the index
/// of the first member of each cluster.
pub fn merge_single_linkage(
    points: &[&[f64]],
    h: &BandwidthMatrix,
    tol: f64,
) -> (Vec<usize>, Vec<usize>) {
    let white: Vec<Vec<f64>> = points.iter().map(|p| h.whiten(p)).collect();
    let key = |w: &[f64]| -> Vec<i64> { w.iter().map(|v| (v / tol).floor() as i64).collect() };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, w) in white.iter().enumerate() {
        buckets.entry(key(w)).or_default().push(i);
    }
    let mut uf = UnionFind::new(points.len());
    let d = h.dim();
    let tol2 = tol * tol;
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut c| {
            (0..d)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .collect();
    for (i, w) in white.iter().enumerate() {
        let base = key(w);
        for off in &offsets {
            let k: Vec<i64> = base.iter().zip(off).map(|(a, b)| a + b).collect();
            if let Some(members) = buckets.get(&k) {
                for &j in members {
                    if j < i {
                        let dist: f64 = w.iter().zip(&white[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                        if dist < tol2 {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut root_label: HashMap<usize, usize> = HashMap::new();
    let mut first = Vec::new();
    let labels = (0..points.len())
        .map(|i| {
            let r = uf.find(i);
            *root_label.entry(r).or_insert_with(|| {
                first.push(i);
                first.len() - 1
            })
        })
        .collect();
    (labels, first)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}
