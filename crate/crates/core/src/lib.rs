pub mod lattice;
pub mod linalg;
pub mod coarselift;
pub mod dislocation;
pub mod invariants;
pub mod kalgebra;
pub mod models;
pub mod operators;
