//! Curved clusters built from circular arcs blurred by isotropic noise.
//!
//! A segment draws an angle uniformly on `[theta_1, theta_2]`, places the point
//! on the circle of the given radius and adds `N(0, sigma^2 I)` noise. Its
//! density is the angular average of those normal densities; the average is
//! evaluated by composite Gauss-Legendre quadrature with panels no longer than
//! `sigma` in arc length, so the model reduces to a finite normal sum.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::kernels::BandwidthMatrix;
use crate::quadrature::composite_gauss_legendre;

use super::gaussian_sum::GaussianSum;
use super::mixture::Component;

const QUADRATURE_ORDER: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub weight: f64,
    pub center: [f64; 2],
    pub radius: f64,
    /// Angular interval in degrees, counter-clockwise from the positive x axis.
    pub angles_deg: [f64; 2],
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub blobs: Vec<Component>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RingParams", into = "RingParams")]
pub struct RingSegmentModel {
    params: RingParams,
    sum: GaussianSum,
    /// Cumulative weights over segments then blobs.
    cumulative: Vec<f64>,
    blob_factors: Vec<Vec<f64>>,
}

impl PartialEq for RingSegmentModel {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl From<RingSegmentModel> for RingParams {
    fn from(m: RingSegmentModel) -> Self {
        m.params
    }
}

impl TryFrom<RingParams> for RingSegmentModel {
    type Error = Error;

    fn try_from(p: RingParams) -> Result<Self> {
        Self::new(p.segments, p.blobs)
    }
}

impl RingSegmentModel {
    pub fn new(segments: Vec<Segment>, blobs: Vec<Component>) -> Result<Self> {
        if segments.is_empty() && blobs.is_empty() {
            return Err(Error::Model("ring model has no parts".into()));
        }
        let total: f64 = segments.iter().map(|s| s.weight).sum::<f64>()
            + blobs.iter().map(|b| b.weight).sum::<f64>();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Model(format!("weights sum to {total}, not 1")));
        }
        let mut terms = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for s in &segments {
            if !(s.weight > 0.0) || !(s.sigma > 0.0) || !(s.radius > 3.0 * s.sigma) {
                return Err(Error::Model(format!(
                    "segment needs weight > 0, sigma > 0 and radius > 3 sigma: {s:?}"
                )));
            }
            let (a, b) = (s.angles_deg[0].to_radians(), s.angles_deg[1].to_radians());
            if !(b > a) || b - a > std::f64::consts::TAU + 1e-12 {
                return Err(Error::Model(format!(
                    "angle interval {:?} must be increasing and at most 360 degrees",
                    s.angles_deg
                )));
            }
            let cov = BandwidthMatrix::scalar(2, s.sigma * s.sigma)?;
            let panels = ((s.radius * (b - a) / s.sigma).ceil() as usize).max(1);
            let (nodes, weights) = composite_gauss_legendre(a, b, panels, QUADRATURE_ORDER);
            for (t, w) in nodes.iter().zip(&weights) {
                let p = vec![
                    s.center[0] + s.radius * t.cos(),
                    s.center[1] + s.radius * t.sin(),
                ];
                terms.push((s.weight * w / (b - a), p, cov.clone()));
            }
            acc += s.weight;
            cumulative.push(acc);
        }
        let mut blob_factors = Vec::new();
        for c in &blobs {
            if c.mean.len() != 2 {
                return Err(Error::Model("ring model blobs must be bivariate".into()));
            }
            if !(c.weight > 0.0) {
                return Err(Error::Model(format!("blob weight {} must be positive", c.weight)));
            }
            let cov = c.covariance_matrix()?;
            blob_factors.push(cov.cholesky_factor().to_vec());
            terms.push((c.weight, c.mean.clone(), cov));
            acc += c.weight;
            cumulative.push(acc);
        }
        Ok(Self {
            sum: GaussianSum::new(2, terms),
            params: RingParams { segments, blobs },
            cumulative,
            blob_factors,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.params.segments
    }

    pub fn blobs(&self) -> &[Component] {
        &self.params.blobs
    }

    pub(crate) fn gaussian_sum(&self) -> &GaussianSum {
        &self.sum
    }

    pub fn sample_labeled<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (DataSet, Vec<usize>) {
        let mut pts = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        let ns = self.params.segments.len();
        for _ in 0..n {
            let u: f64 = rng.random::<f64>();
            let k = self
                .cumulative
                .iter()
                .position(|c| u < *c)
                .unwrap_or(self.cumulative.len() - 1);
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            if k < ns {
                let s = &self.params.segments[k];
                let (a, b) = (s.angles_deg[0].to_radians(), s.angles_deg[1].to_radians());
                let t = a + (b - a) * rng.random::<f64>();
                pts.push(s.center[0] + s.radius * t.cos() + s.sigma * z0);
                pts.push(s.center[1] + s.radius * t.sin() + s.sigma * z1);
            } else {
                let c = &self.params.blobs[k - ns];
                let l = &self.blob_factors[k - ns];
                pts.push(c.mean[0] + l[0] * z0);
                pts.push(c.mean[1] + l[2] * z0 + l[3] * z1);
            }
            labels.push(k);
        }
        (DataSet::new(2, pts).expect("finite draws"), labels)
    }

    pub(crate) fn bounding_box(&self, sds: f64) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; 2];
        let mut hi = vec![f64::NEG_INFINITY; 2];
        for s in &self.params.segments {
            let (a, b) = (s.angles_deg[0].to_radians(), s.angles_deg[1].to_radians());
            for i in 0..=720 {
                let t = a + (b - a) * i as f64 / 720.0;
                let p = [
                    s.center[0] + s.radius * t.cos(),
                    s.center[1] + s.radius * t.sin(),
                ];
                for k in 0..2 {
                    lo[k] = lo[k].min(p[k] - sds * s.sigma);
                    hi[k] = hi[k].max(p[k] + sds * s.sigma);
                }
            }
        }
        for c in &self.params.blobs {
            for k in 0..2 {
                let sd = c.covariance[k][k].sqrt();
                lo[k] = lo[k].min(c.mean[k] - sds * sd);
                hi[k] = hi[k].max(c.mean[k] + sds * sd);
            }
        }
        (lo, hi)
    }
}
