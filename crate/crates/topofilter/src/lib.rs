//! Topological selection of clean training data under label noise.
//!
//! The pipeline builds a symmetric k-nearest-neighbor graph over feature
//! vectors, restricts it to each observed class, keeps the largest connected
//! component per class, and then drops every point whose k nearest neighbors
//! inside the candidate pool vote against its label at a threshold `zeta`.
//! Points that survive are overwhelmingly correctly labeled, because
//! mislabeled points land inside the opposite class's region and lose both
//! the component and the vote stage.
//!
//! The crate also ships the machinery to validate that story end to end:
//! noise injection through row-stochastic transition matrices, Gaussian
//! mixture generators with analytic posteriors, closed-form purity bounds,
//! per-class graph predicates (connectivity, isolation, filtering), and a
//! seeded trial harness plus hyper-parameter sweeps that measure all of it.
//!
//! Everything is deterministic given a seed: parallel and sequential builds
//! (feature `parallel`, on by default) produce identical results.

pub mod components;
pub mod dataset;
pub mod error;
pub mod filter;
pub mod knn;
pub mod metrics;
pub mod noise;
pub mod par;
pub mod rng;
pub mod sweep;
pub mod synth;

pub use dataset::{Dataset, FeaturesView};
pub use error::{Error, Result};
pub use filter::{
    iterate_selection, naive_select, topo_cc_select, topo_filter_select, zeta_filter,
    FilterParams, SelectionMethod, SelectionResult,
};
pub use knn::{KnnGraph, NeighborTable, SearchStrategy};
pub use metrics::{run_theorem_suite, TheoremReport, TheoremSuiteConfig};
pub use noise::{inject_noise, TransitionMatrix};
pub use sweep::{run_sweep, SweepConfig, SweepOutput};
pub use synth::{sample_mixture, MixturePosterior, MixtureSpec};
