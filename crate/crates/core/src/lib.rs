//! Downlink simulator for a massive-MIMO macrocell overlaid with small cells
//! serving hotspot user groups.

pub mod channel;
pub mod coordination;
pub mod detequiv;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mcoracle;
pub mod scheduler;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Deployment, Layout, SimParams};
