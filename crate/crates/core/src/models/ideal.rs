//! Ideal population clustering: the whole-space partition induced by gradient
//! ascent on the true density.
//!
//! Every grid point follows `y <- y + t beta D f(y) / f(y)` with
//! `beta = beta_factor * scale^2` and `t` halved until `log f` does not
//! decrease. Limit points that are not local maxima (saddles reached from
//! starts on a symmetry line) are pushed off along the ascending eigenvector,
//! towards the side of the start, and the ascent resumes.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::BandwidthMatrix;
use crate::meanshift::merge_single_linkage;
use crate::partition::{cell_masses, GridSpec, SpacePartition};

use super::{Model, NamedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscentConfig {
    /// `beta / scale^2`, where scale is the root mean marginal variance.
    pub beta_factor: f64,
    /// Stop when a step is shorter than `step_tol * scale`.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Limit points within `merge_tol * scale` share a mode.
    pub merge_tol: f64,
    /// Saddle escapes attempted per trajectory.
    pub max_escapes: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            beta_factor: 0.05,
            step_tol: 1e-10,
            max_iter: 20_000,
            merge_tol: 1e-4,
            max_escapes: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealClustering {
    pub model: String,
    pub partition: SpacePartition,
    /// Mode of each cluster, in label order.
    pub modes: Vec<Vec<f64>>,
    /// Cells whose ascent did not reach a local maximum; these are assigned
    /// to the nearest mode.
    pub flagged: usize,
}

impl IdealClustering {
    pub fn n_clusters(&self) -> usize {
        self.modes.len()
    }
}

struct Ascent<'a> {
    model: &'a Model,
    beta: f64,
    scale: f64,
    cfg: &'a AscentConfig,
}

enum Outcome {
    Mode(Vec<f64>),
    Stuck(Vec<f64>),
}

impl Ascent<'_> {
    fn grad(&self, y: &[f64]) -> (f64, Vec<f64>) {
        self.model.log_density_gradient(y).expect("dimension checked")
    }

    /// Runs to a stationary point; `None` if the budget runs out.
    fn climb(&self, y0: &[f64]) -> Option<Vec<f64>> {
        let mut y = y0.to_vec();
        let (mut lf, mut g) = self.grad(&y);
        let mut t: f64 = 1.0;
        let tol = self.cfg.step_tol * self.scale;
        for _ in 0..self.cfg.max_iter {
            t = (2.0 * t).min(1.0);
            loop {
                let trial: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a + t * self.beta * b).collect();
                let step = t * self.beta * g.iter().map(|v| v * v).sum::<f64>().sqrt();
                let (lt, gt) = self.grad(&trial);
                if lt >= lf {
                    y = trial;
                    lf = lt;
                    g = gt;
                    if step < tol {
                        return Some(y);
                    }
                    break;
                }
                t *= 0.5;
                if step < tol {
                    return Some(y);
                }
            }
        }
        None
    }

    /// Hessian of `log f` by central differences of the gradient.
    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let d = y.len();
        let e = 1e-4 * self.scale;
        let mut h = DMatrix::zeros(d, d);
        let mut p = y.to_vec();
        for j in 0..d {
            p[j] = y[j] + e;
            let gp = self.grad(&p).1;
            p[j] = y[j] - e;
            let gm = self.grad(&p).1;
            p[j] = y[j];
            for i in 0..d {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * e);
            }
        }
        0.5 * (&h + h.transpose())
    }

    fn run(&self, y0: &[f64]) -> Outcome {
        let mut start = y0.to_vec();
        let mut last = y0.to_vec();
        for _ in 0..=self.cfg.max_escapes {
            let Some(limit) = self.climb(&start) else {
                return Outcome::Stuck(last);
            };
            let eig = SymmetricEigen::new(self.hessian(&limit));
            let (k, top) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
            if top < 0.0 {
                return Outcome::Mode(limit);
            }
            let v = eig.eigenvectors.column(k);
            let side: f64 = v.iter().zip(y0.iter().zip(&limit)).map(|(a, (p, q))| a * (p - q)).sum();
            let sign = if side < 0.0 { -1.0 } else { 1.0 };
            start = limit.iter().zip(v.iter()).map(|(p, a)| p + sign * 1e-3 * self.scale * a).collect();
            last = limit;
        }
        Outcome::Stuck(last)
    }
}

/// Labels every point of `grid` by the mode its ascent on the true density
/// reaches. Masses are the model's cell masses.
pub fn ideal_clustering(model: &Model, grid: &GridSpec, cfg: &AscentConfig) -> Result<IdealClustering> {
    if grid.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: grid.dim(),
        });
    }
    let scale = model.scale();
    let ascent = Ascent {
        model,
        beta: cfg.beta_factor * scale * scale,
        scale,
        cfg,
    };
    let outcomes: Vec<Outcome> = (0..grid.len())
        .into_par_iter()
        .map(|i| ascent.run(&grid.point(i)))
        .collect();
    let found: Vec<usize> = (0..outcomes.len())
        .filter(|&i| matches!(outcomes[i], Outcome::Mode(_)))
        .collect();
    if found.is_empty() {
        return Err(Error::Numerical("no grid point reached a mode".into()));
    }
    let limits: Vec<&[f64]> = found
        .iter()
        .map(|&i| match &outcomes[i] {
            Outcome::Mode(m) => m.as_slice(),
            Outcome::Stuck(_) => unreachable!(),
        })
        .collect();
    let metric = BandwidthMatrix::scalar(model.dim(), scale * scale)?;
    let (found_labels, first) = merge_single_linkage(&limits, &metric, cfg.merge_tol);
    let modes: Vec<Vec<f64>> = first.iter().map(|&i| limits[i].to_vec()).collect();
    let mut labels = vec![usize::MAX; grid.len()];
    for (j, &i) in found.iter().enumerate() {
        labels[i] = found_labels[j];
    }
    let mut flagged = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if let Outcome::Stuck(p) = o {
            flagged += 1;
            labels[i] = nearest(&modes, p);
        }
    }
    let (masses, _) = cell_masses(model, grid)?;
    Ok(IdealClustering {
        model: String::new(),
        partition: SpacePartition::new(grid.clone(), labels, masses)?,
        modes,
        flagged,
    })
}

fn nearest(modes: &[Vec<f64>], p: &[f64]) -> usize {
    let dist = |m: &Vec<f64>| m.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..modes.len())
        .min_by(|&a, &b| dist(&modes[a]).total_cmp(&dist(&modes[b])))
        .expect("at least one mode")
}

impl NamedModel {
    /// Ideal clustering, checked against the declared cluster count.
    pub fn ideal_clustering(&self, grid: &GridSpec, cfg: &AscentConfig) -> Result<IdealClustering> {
        let mut ideal = ideal_clustering(&self.model, grid, cfg)?;
        if ideal.n_clusters() != self.true_clusters {
            return Err(Error::Model(format!(
                "{}: ascent found {} modes, the model declares {}",
                self.name,
                ideal.n_clusters(),
                self.true_clusters
            )));
        }
        ideal.model = self.name.clone();
        Ok(ideal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Component, MixtureModel};
    use crate::partition::build_grid;

    fn mixture(parts: &[(f64, [f64; 2])]) -> Model {
        Model::Mixture(
            MixtureModel::new(
                parts
                    .iter()
                    .map(|(w, m)| Component {
                        weight: *w,
                        mean: m.to_vec(),
                        covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                    })
                    .collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn unimodal_normal_is_one_cluster() {
        let m = mixture(&[(1.0, [0.0, 0.0])]);
        let grid = build_grid(&m, 15).unwrap();
        let ideal = ideal_clustering(&m, &grid, &AscentConfig::default()).unwrap();
        assert_eq!(ideal.n_clusters(), 1);
        assert_eq!(ideal.flagged, 0);
        assert!(ideal.modes[0].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn symmetric_pair_splits_on_the_axis() {
        let m = mixture(&[(0.5, [-3.0, 0.0]), (0.5, [3.0, 0.0])]);
        // Odd resolution puts a grid column on x1 = 0, which exercises the
        // saddle escape.
        let grid = build_grid(&m, 21).unwrap();
        let ideal = ideal_clustering(&m, &grid, &AscentConfig::default()).unwrap();
        assert_eq!(ideal.n_clusters(), 2);
        let step = grid.spacing(0);
        let labels = ideal.partition.labels();
        let left = labels[0];
        for i in 0..grid.len() {
            let x = grid.point(i)[0];
            if x < -step {
                assert_eq!(labels[i], left);
            } else if x > step {
                assert_ne!(labels[i], left);
            }
        }
    }
}
