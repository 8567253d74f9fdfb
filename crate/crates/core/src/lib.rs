//! Beamforming and energy trading for a hybrid-powered downlink.

pub mod cli;
pub mod conic;
pub mod controller;
pub mod embedding;
pub mod error;
pub mod experiments;
pub mod feasibility;
pub mod model;
pub mod sabf;
pub mod scalar;
pub mod stochastic;
pub mod zfbf;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Config = model::SystemConfig<f64>;
pub type Channel = model::ChannelState<f64>;
pub type EnergyPrice = model::EnergyPriceState<f64>;
pub type Solution = model::BeamformingSolution<f64>;
pub type Queues = model::QueueState<f64>;
pub type LinkConfig = model::LinkParams<f64>;
