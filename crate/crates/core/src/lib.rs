//! Network dynamics forecasting through a learned skeleton on the Poincaré disk.

pub mod diffprog;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod hyperbolic;
pub mod io;
pub mod pipeline;
pub mod skeleton;
pub mod skeleton_ode;
pub mod superres;

pub use error::{Error, Result};
pub use graph::Graph;
