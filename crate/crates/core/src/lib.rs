//! Growth rate of the AWGN-pseudoweight spectrum of regular LDPC code
//! ensembles under degree-M graph covers.
//!
//! * [`polynomial`]: exact sparse multivariate polynomials.
//! * [`pwef`]: the pseudoweight enumerator `B^{(M)}` of a single check node.
//! * [`oracle`]: brute-force cross-checks on small instances.
//! * [`solver`]: the stationarity system and the growth-rate function `f(q)`.
//! * [`growth`]: sweeps over α and threshold search.

pub mod error;
pub mod exec;
pub mod growth;
pub mod oracle;
pub mod polynomial;
pub mod pwef;
pub mod solver;
pub mod tilted;

pub use error::{Error, Result};
pub use exec::Execution;
pub use polynomial::SparsePoly;
pub use pwef::PwefSpec;
pub use solver::{EnsembleParams, Problem, SolverConfig, StationaryPoint};
