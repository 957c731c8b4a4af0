//! Synthesis toolchain and simulator for pin-constrained digital
//! microfluidic biochips.
//!
//! The pipeline mirrors the standard DMFB synthesis flow: a bioassay DAG is
//! scheduled onto the fixed modules of an architecture (list scheduling),
//! operations are bound to concrete modules (left-edge binding), droplet
//! transports are routed along the 3-phase routing paths, and the result is
//! compiled into per-timestep pin actuation frames that an independent
//! forward simulator can replay. Cost (shift registers, PCB dimensions,
//! dollars) and wire-routing metal-layer counts are estimated from the same
//! architecture description.

pub mod actuate;
pub mod arch;
pub mod assay;
pub mod bind;
pub mod cost;
pub mod geom;
pub mod report;
pub mod route;
pub mod schedule;
pub mod wire;

pub use geom::Cell;
