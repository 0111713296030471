//! Quantum trajectories under continuous measurement: Lindblad semigroups, stochastic
//! Schrödinger and master equations, the linear propagator and its likelihood statistics,
//! purification checks, and exact Wasserstein comparisons against known invariant laws.

pub mod error;
pub mod experiment;
pub mod gallery;
pub mod lindblad;
pub mod measure;
pub mod operator;
pub mod purification;
pub mod quadrature;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use lindblad::{check_l_erg, evolve_master, ErgodicityReport, OperatorModel};
pub use operator::{ComplexOperator, DensityMatrix, HermitianOperator, ProjectivePoint};
pub use purification::{check_pur, PurReport, PurVerdict};
pub use trajectory::SimConfig;
