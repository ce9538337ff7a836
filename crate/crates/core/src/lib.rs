//! Norm-based (continuous-space) agent epidemic simulation, graph surrogate
//! fitting, and agreement scoring between the two representations.

pub mod epi;
pub mod error;
pub mod geom;
pub mod graph;
pub mod harness;
pub mod io;
pub mod norm;
pub mod rng;
pub mod search;
pub mod sim;
pub mod walk;

pub use error::{Error, Result};
pub use geom::{BBox, Point};
