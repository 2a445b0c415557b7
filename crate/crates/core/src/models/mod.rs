//! Generative density models and the model registry.
//!
//! Two families are supported: normal mixtures and ring-segment models
//! (blurred circular arcs plus optional normal blobs). Both evaluate their
//! density, gradient and normalised gradient in closed form over a finite sum
//! of normal densities.

mod gaussian_sum;
pub mod ideal;
pub mod mixture;
pub mod ring;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{check_dim, Error, Result};

pub use ideal::{ideal_clustering, AscentConfig, IdealClustering};
pub use mixture::{Component, MixtureModel};
pub use ring::{RingSegmentModel, Segment};

/// Anything with an evaluable density, used for cell masses.
pub trait Density: Sync {
    fn dim(&self) -> usize;
    fn density(&self, x: &[f64]) -> f64;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "lowercase")]
pub enum Model {
    Mixture(MixtureModel),
    Ring(RingSegmentModel),
}

impl Model {
    fn sum(&self) -> &gaussian_sum::GaussianSum {
        match self {
            Model::Mixture(m) => m.gaussian_sum(),
            Model::Ring(r) => r.gaussian_sum(),
        }
    }

    pub fn dim(&self) -> usize {
        self.sum().dim()
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.sum().density(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.sum().gradient(x))
    }

    /// `(log f(x), D f(x) / f(x))`, stable far from the bulk of the mass.
    pub fn log_density_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), x.len())?;
        Ok(self.sum().log_density_gradient(x))
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DataSet> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_labeled(n, &mut rng).0)
    }

    /// Draws with the index of the generating part (component, segment or blob).
    pub fn sample_labeled<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (DataSet, Vec<usize>) {
        match self {
            Model::Mixture(m) => m.sample_labeled(n, rng),
            Model::Ring(r) => r.sample_labeled(n, rng),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum().mean()
    }

    /// Row-major covariance matrix of the model.
    pub fn covariance(&self) -> Vec<f64> {
        self.sum().covariance()
    }

    /// Root mean marginal variance, the length scale used by the ideal ascent.
    pub fn scale(&self) -> f64 {
        let d = self.dim();
        let c = self.covariance();
        ((0..d).map(|k| c[k * d + k]).sum::<f64>() / d as f64).sqrt()
    }

    /// Per-coordinate box spanning every part expanded by `sds` standard deviations.
    pub fn bounding_box(&self, sds: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            Model::Mixture(m) => m.bounding_box(sds),
            Model::Ring(r) => r.bounding_box(sds),
        }
    }
}

impl Density for Model {
    fn dim(&self) -> usize {
        Model::dim(self)
    }

    fn density(&self, x: &[f64]) -> f64 {
        self.sum().density(x)
    }
}

/// A registry entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    #[serde(flatten)]
    pub model: Model,
    pub true_clusters: usize,
    /// Parameters approximate a published model rather than transcribe it.
    #[serde(default)]
    pub reconstruction: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

/// Named models loaded from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Registry {
    models: Vec<NamedModel>,
}

const BUILTIN_REGISTRY: &str = include_str!("builtin_registry.json");

impl Registry {
    pub fn new(models: Vec<NamedModel>) -> Result<Self> {
        for (i, m) in models.iter().enumerate() {
            if m.true_clusters == 0 {
                return Err(Error::Model(format!("{}: true_clusters must be positive", m.name)));
            }
            if models[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::Model(format!("duplicate model name {}", m.name)));
            }
        }
        Ok(Self { models })
    }

    /// The shipped models: two normal mixtures and three ring-segment models.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_REGISTRY).expect("builtin registry is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let models: Vec<NamedModel> = serde_json::from_str(text)?;
        Self::new(models)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn get(&self, name: &str) -> Result<&NamedModel> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::Model(format!("unknown model {name:?}")))
    }

    pub fn models(&self) -> &[NamedModel] {
        &self.models
    }

    pub fn names(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.name.as_str()).collect()
    }
}
