//! Simulation and verification lab for the XY model under quenched disorder.
//!
//! The crate is organized around the objects it simulates:
//!
//! * [`graph`] — deterministic weighted graphs: boxes of `Z^d`, the extended
//!   lattice `Z^d_n`, the extended triangulation and its dual, renormalized
//!   box graphs.
//! * [`disorder`] — Bernoulli site/edge percolation, cluster labeling,
//!   pre-good/good boxes, and Poisson-Voronoi geometry ([`voronoi`]).
//! * [`models`] — energy functionals: XY with percolation or gauge disorder,
//!   heterogeneous two-temperature couplings, the two-component Phi^4 model.
//! * [`sampler`] — heat-bath / Metropolis / embedded-cluster Monte Carlo,
//!   integer height-function sweeps, and autocorrelation-aware estimators.
//! * [`oracle`] — exact references: modified Bessel series, small-graph
//!   quadrature, full enumeration of the percolation-weighted measure,
//!   Wells-condition certification, domination checks.
//! * [`dual_height`] — Bessel height potentials, Lammers-condition margins,
//!   inverse-temperature thresholds, delocalization experiments.
//! * [`nishimori`] — gauge disorder identities, increasing-path sampling and
//!   intersection tails.

pub mod disorder;
pub mod dual_height;
pub mod error;
pub mod graph;
pub mod io;
pub mod models;
pub mod nishimori;
pub mod oracle;
mod quad;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod voronoi;

pub use error::CoreError;
pub use graph::{DualGraph, EdgeClass, LatticeBox, WeightedGraph};
pub use models::{GaugeDisorder, Phi4State, SingleSiteMeasure, SpinState};
