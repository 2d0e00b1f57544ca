//! Simulation toolkit for quantum annealing correction on minor-embedded
//! Ising problems.
//!
//! The crate covers the full pipeline: hardware (Chimera) and logical
//! (two-level-grid) graph construction, planted frustrated-loop instance
//! generation, Direct / minor-embedding / QAC-ME mapping with penalty
//! assignment, simulated-quantum-annealing and classical solvers, broken-qubit
//! decoding strategies, percolation-based decodability analysis, and the
//! experiment statistics machinery (gauge cycles, renormalization, bootstrap).

pub mod cli;
pub mod decoding;
pub mod embedding;
pub mod error;
pub mod experiment;
pub mod instances;
pub mod ising;
pub mod percolation;
pub mod solvers;
pub mod topology;
pub(crate) mod util;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
