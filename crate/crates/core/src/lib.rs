//! Numerical laboratory for continuous flows on compact surfaces.
pub mod atlas;
pub mod cantor;
pub mod circle_map;
pub mod config;
pub mod error;
pub mod field;
pub mod hamiltonian;
pub mod integrator;
pub mod limits;
pub mod par;
pub mod render;
pub mod report;
pub mod surgery;
pub mod tables;
pub use error::{FlowError, Result};
