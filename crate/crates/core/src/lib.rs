//! Economic dispatch with separable power losses.
//!
//! The non-convex dispatch problem (quadratic-in-loss supply/demand balance,
//! box capacity limits) is relaxed to an inequality, which is exact, and solved
//! through its single-price dual. [`central`] gives reference solutions,
//! [`distsim`] simulates the distributed consensus algorithm in which every
//! node holds its own price estimate, and [`oracle`] provides brute-force
//! checks for small instances.

pub mod central;
pub mod datasets;
pub mod distsim;
pub mod error;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod scenario;
pub mod topology;

pub use error::{Error, Result};
pub use kernel::NodeKernel;
pub use model::{Fleet, NodeId, NodeSpec, ScalarFunction};
pub use topology::Topology;
