//! Normal mixture densities.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{check_dim, Error, Result};
use crate::kernels::BandwidthMatrix;

use super::gaussian_sum::GaussianSum;

/// One weighted normal component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl Component {
    pub(crate) fn covariance_matrix(&self) -> Result<BandwidthMatrix> {
        let d = self.mean.len();
        if self.covariance.len() != d {
            return Err(Error::Model(format!(
                "covariance has {} rows for a {d}-dimensional mean",
                self.covariance.len()
            )));
        }
        let mut flat = Vec::with_capacity(d * d);
        for row in &self.covariance {
            check_dim(d, row.len())?;
            flat.extend_from_slice(row);
        }
        BandwidthMatrix::from_rows(d, &flat)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub components: Vec<Component>,
}

/// `sum_k w_k N(mu_k, S_k)` with weights summing to one.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MixtureParams", into = "MixtureParams")]
pub struct MixtureModel {
    params: MixtureParams,
    sum: GaussianSum,
    /// Lower Cholesky factors for sampling.
    factors: Vec<Vec<f64>>,
    cumulative: Vec<f64>,
}

impl PartialEq for MixtureModel {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl From<MixtureModel> for MixtureParams {
    fn from(m: MixtureModel) -> Self {
        m.params
    }
}

impl TryFrom<MixtureParams> for MixtureModel {
    type Error = Error;

    fn try_from(p: MixtureParams) -> Result<Self> {
        Self::new(p.components)
    }
}

impl MixtureModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Model("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::Model("zero-dimensional mixture".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("weights sum to {total}, not 1")));
        }
        let mut terms = Vec::with_capacity(components.len());
        let mut factors = Vec::with_capacity(components.len());
        let mut cumulative = Vec::with_capacity(components.len());
        let mut acc = 0.0;
        for c in &components {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::Model(format!("weight {} outside (0, 1]", c.weight)));
            }
            check_dim(dim, c.mean.len())?;
            let cov = c.covariance_matrix()?;
            factors.push(cov.cholesky_factor().to_vec());
            terms.push((c.weight, c.mean.clone(), cov));
            acc += c.weight;
            cumulative.push(acc);
        }
        Ok(Self {
            sum: GaussianSum::new(dim, terms),
            params: MixtureParams { components },
            factors,
            cumulative,
        })
    }

    pub fn components(&self) -> &[Component] {
        &self.params.components
    }

    pub fn dim(&self) -> usize {
        self.sum.dim()
    }

    pub(crate) fn gaussian_sum(&self) -> &GaussianSum {
        &self.sum
    }

    /// Draws `n` points, also returning the component of each draw.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (DataSet, Vec<usize>) {
        let d = self.dim();
        let mut pts = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut z = vec![0.0; d];
        for _ in 0..n {
            let u: f64 = rng.random::<f64>();
            let k = self
                .cumulative
                .iter()
                .position(|c| u < *c)
                .unwrap_or(self.cumulative.len() - 1);
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let l = &self.factors[k];
            let mean = &self.params.components[k].mean;
            for a in 0..d {
                let mut v = mean[a];
                for b in 0..=a {
                    v += l[a * d + b] * z[b];
                }
                pts.push(v);
            }
            labels.push(k);
        }
        (DataSet::new(d, pts).expect("finite draws"), labels)
    }

    pub(crate) fn bounding_box(&self, sds: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in &self.params.components {
            for k in 0..d {
                let sd = c.covariance[k][k].sqrt();
                lo[k] = lo[k].min(c.mean[k] - sds * sd);
                hi[k] = hi[k].max(c.mean[k] + sds * sd);
            }
        }
        (lo, hi)
    }
}
