//! Loopy belief propagation on hypergraph Gibbs models, formulated as a
//! sequence of reparameterizations, together with the Bethe log-partition
//! function whose stationary points over homogeneous reparameterizations are
//! exactly the BP fixed points.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: hypergraphs, the overcomplete parameter vector, and
//!   reparameterizations.
//! * [`exact`]: brute-force log-partition function, marginals, entropy and
//!   KL divergence. Ground truth for everything else.
//! * [`local`]: local distributions, beliefs, residuals, the Bethe
//!   log-partition function and both forms of the Bethe entropy.
//! * [`bp`]: serial BP as elementary reparameterizations.
//! * [`calculus`]: gradients, fixed-point Hessian blocks, the saddle probe,
//!   and finite-difference oracles.
//! * [`cli`]: the `GIBBS-LOG` model format and the `bethe` command line.
//!
//! ```
//! use bethe_bp::bp::{run_bp, BpConfig};
//! use bethe_bp::generate::ising_grid;
//! use bethe_bp::local::residual;
//!
//! let model = ising_grid(3, 3, 0.2, 0.5, 7);
//! let result = run_bp(&model, &BpConfig::default()).unwrap();
//! assert!(result.converged());
//! assert!(residual(&result.final_model).max_abs() <= 1e-9);
//! ```

pub mod bp;
pub mod calculus;
pub mod cli;
pub mod exact;
pub mod generate;
pub mod local;
pub mod math;
pub mod model;

pub use bp::{run_bp, BpConfig, BpResult, BpStatus, Schedule};
pub use model::{ConstantShift, HomogeneousReparam, Hypergraph, Model, ModelError, TableVector};
