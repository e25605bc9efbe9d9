//! Optimal control of a four-phase hybrid epidemic model.
//!
//! The workplace cycles through return-to-office, work-from-home and a
//! protocol phase before returning to the office. Two of the switchings are
//! triggered by the infected fraction crossing a threshold; the third is a
//! decision variable. Continuous controls are found with a forward–backward
//! sweep and the free switching time by driving the Hamiltonian gap to zero.

pub mod error;
pub mod hybrid;
pub mod integrator;
pub mod io;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
pub use model::EpiModel;
pub use solver::{solve, Solution, SolverConfig};
