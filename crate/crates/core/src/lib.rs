//! Behavioral simulator for a graphene-oxide memristive synapse, with
//! scripted experiments, figure-of-merit extraction, and parameter fitting.

pub mod acceptance;
pub mod analysis;
pub mod calibration;
pub mod cli;
pub mod device;
pub mod error;
pub mod io;
pub mod par;
pub mod protocols;
pub mod simulator;
pub mod waveform;

pub use device::{DeviceParams, DeviceState};
pub use error::{Error, Result};
pub use simulator::{SimConfig, Trace, TraceSample};
pub use waveform::{Segment, Waveform, WaveformBuilder};
