//! Mean shift modal clustering with unconstrained bandwidth matrices.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: the Gaussian kernel, SPD bandwidth matrices, Laplacians and
//!   higher-order derivative tensors.
//! - [`meanshift`]: kernel density and gradient estimates, the mean shift
//!   update, convergence to modes and labeling of arbitrary point sets.
//! - [`selectors`]: the ten bandwidth selectors (NS, AT and the unconstrained
//!   and diagonal CV, PI, SCV and IT variants).
//! - [`models`]: generative test densities and their ideal population
//!   clustering.
//! - [`partition`]: whole-space clusterings on probability grids and the
//!   distance in measure between them.
//! - [`harness`]: the replicated simulation study and its summaries.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory; the
//! `mslab` binary is a thin command-line shell over the same API.

pub mod data;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod meanshift;
pub mod models;
pub mod partition;
pub mod plot;
pub mod quadrature;
pub mod selectors;

pub use data::DataSet;
pub use error::{Error, Result};
pub use kernels::{BandwidthClass, BandwidthMatrix, Kernel};
pub use meanshift::{ClusterResult, MeanShiftConfig};
pub use models::{Model, NamedModel, Registry};
pub use partition::{DistanceReport, GridSpec, SpacePartition};
pub use selectors::{Method, SelectionResult, SelectorSpec};
