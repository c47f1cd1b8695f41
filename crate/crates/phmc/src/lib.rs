//! Preconditioned Hamiltonian Monte Carlo on spectrally represented spaces.
//!
//! The sampler targets measures of the form `exp(-U) d(gaussian)` on a
//! finite spectral truncation of a Hilbert space, using the reference
//! covariance both to precondition the Hamiltonian flow and to refresh the
//! velocity. On top of the kernel the crate provides:
//!
//! - a two-scale coupling of chain pairs (shifted/reflected velocity noise
//!   on finitely many low modes, synchronous noise on the rest),
//! - the weighted distance and capped semimetric in which the coupling
//!   contracts, with every constant of the contraction statement computed
//!   explicitly,
//! - finite-difference bridge-path and ring-polymer targets whose
//!   covariance eigenvalues are closed-form, together with dimension-free
//!   constant bundles for both,
//! - Monte Carlo validators that test the stability, coupling-law and
//!   contraction claims against simulation.
//!
//! The `book/` directory of the repository walks through the concepts; its
//! code snippets compile and run as doc-tests of this crate.
//!
//! # A first chain
//!
//! ```
//! use phmc::models::{PointPotential, TpsModel, TpsParams};
//! use phmc::rng::RngStream;
//! use phmc::sampler::{run_chain, NullSink, PhmcKernel};
//! use phmc::spectral::SpectralVector;
//! use std::sync::Arc;
//!
//! let model = Arc::new(TpsModel::build(TpsParams {
//!     tau: 1.0,
//!     d: 1,
//!     m: 16,
//!     endpoint_a: vec![0.0],
//!     endpoint_b: vec![0.0],
//!     potential: PointPotential::quadratic(1, 1.0),
//! })?) as Arc<dyn phmc::models::TargetModel>;
//!
//! let kernel = PhmcKernel::adjusted(model.clone(), 1.0, 0.125)?;
//! let x0 = SpectralVector::eigen(vec![0.0; 16]);
//! let mut rng = RngStream::from_seed(7);
//! let stats = run_chain(&x0, &kernel, 2_000, &mut rng, &mut NullSink)?;
//! assert!(stats.acceptance_rate() > 0.9);
//! # Ok::<(), phmc::Error>(())
//! ```

pub mod coupling;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod sampler;
pub mod spectral;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};

/// Version string reported in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// The guide chapters double as doc-tests so the book cannot drift from the
// library. Each module below holds one chapter of `book/src/`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/spectral-spaces.md")]
    mod spectral_spaces {}
    #[doc = include_str!("../../../book/src/hamiltonian-flow.md")]
    mod hamiltonian_flow {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/coupling.md")]
    mod coupling {}
    #[doc = include_str!("../../../book/src/distances.md")]
    mod distances {}
    #[doc = include_str!("../../../book/src/constants.md")]
    mod constants {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
}
