//! Channel model: array responses, large-scale propagation and the received
//! pilot signal of each satellite.

pub mod array;
pub mod propagation;
pub mod signal;

pub use array::{steering_vector, ArrayConfig, C64};
pub use propagation::{
    expected_gain_amplitude, fspl_db, los_probability, ris_amplification, total_path_loss, AtmosphereTable,
    EnvironmentParams, Region,
};
pub use signal::{ArraySet, ChannelSnapshot, FrameConfig, NoiseModel, PathGains, SatChannel, Shadowing, SnapshotSpec};
