pub mod burgers2d;
pub mod constraints;
pub mod error;
pub mod io;
pub mod ode;
pub mod opinf;
pub mod pipeline;
pub mod quadop;
pub mod rom;
pub mod skewrep;

pub use error::{EpqError, Result};
pub use quadop::{operators_equivalent, EnergyReport, QuadOp, QuadSystem, SparseQuadOp};
