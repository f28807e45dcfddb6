//! Simulation-based verification and validation harness for automated valet parking.

pub mod geometry;
pub mod map;
pub mod odd;
pub mod perception;
pub mod planner;
pub mod risk;
pub mod scenario;
pub mod sim;
pub mod stl;
pub mod search;
pub mod ce;
pub mod campaign;
