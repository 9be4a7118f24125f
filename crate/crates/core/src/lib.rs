//! Packet-level simulation of reverse-flow forwarding on 2D torus networks.
//!
//! Routing tables are frozen on the fault-free torus. Under bond or site
//! percolation the forwarding engine either drops (NF), takes a downhill
//! alternate (LFA), or generates a reverse flow (RF-CF, RF-LF) that travels
//! against the potential until it annihilates back into a forward flow.

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod error;
pub mod montecarlo;
pub mod potential;
pub mod topology;

pub use error::{Error, Result};
