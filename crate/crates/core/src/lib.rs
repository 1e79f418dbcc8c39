//! Soft-arm physical reservoir computing toolkit.
//!
//! A surrogate pneumatic arm produces seven sensor pressure traces and a
//! bending angle for ramp-cycle actuation profiles and payload masses. A
//! linear readout is trained on the traces to estimate the angle, detect a
//! payload and estimate its mass; the experiment engine sweeps training
//! subsets, sample counts, sensor masks and multi-task selections.

pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod profile;
pub mod readout;
pub mod surrogate;
pub mod tasks;

pub use error::{Error, Result};
