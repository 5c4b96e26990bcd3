//! Monte-Carlo simulator for scalable cell-free massive MIMO with dynamic
//! cooperation clusters.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod access;
pub mod channel;
pub mod config;
pub mod error;
pub mod gates;
pub mod harness;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod scalar;
pub mod se;
pub mod topology;
pub mod transceive;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type C64 = C<f64>;
pub type Matrix = linalg::CMatrix<f64>;
pub type Correlation = channel::SpatialCorrelation<f64>;
pub type Frame = channel::FrameConfig<f64>;
pub type Channels = channel::ChannelDraw<f64>;
pub type Estimates = channel::EstimateDraw<f64>;
pub type Gains = topology::LargeScale<f64>;
