//! Stochastic cellular fire-spread simulation with neural surrogates.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: the raster fire-spread simulator producing first-arrival-time maps.
//! - [`dataset`]: parameter sampling, preprocessing, network input encoding and
//!   on-disk datasets (FAT1 rasters plus a JSON manifest).
//! - [`nn`]: a small dense-tensor network engine, generic over the scalar type,
//!   with analytic gradients, masked loss, initialisation and Adam.
//! - [`models`]: the four architectures, training loops and prediction.
//! - [`eval`]: error metrics and the simulate/predict/re-simulate round trip.
//!
//! Numeric code in [`nn`], [`models`] and [`eval`] is generic over [`Scalar`]
//! (`f32` for training, `f64` for gradient verification); the aliases below
//! name the common instantiations.

pub mod dataset;
pub mod error;
pub mod fat;
pub mod eval;
pub mod models;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use raster::{ArrivalMap, BurnMask, Raster};
pub use scalar::Scalar;
pub use sim::{Neighborhood, SimConfig, SimParams};

/// Single-precision tensor used for training.
pub type Tensor32 = nn::Tensor<f32>;
/// Double-precision tensor used for gradient verification.
pub type Tensor64 = nn::Tensor<f64>;
/// Single-precision network.
pub type Network32 = nn::Network<f32>;
/// Double-precision network.
pub type Network64 = nn::Network<f64>;

/// Trained single-precision model.
pub type TrainedModel32 = models::TrainedModel<f32>;
