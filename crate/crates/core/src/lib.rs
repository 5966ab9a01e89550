pub mod anisotropy;
pub mod assembly;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod polygon;
pub mod solver;
pub mod stabilization;
