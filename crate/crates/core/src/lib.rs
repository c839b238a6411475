//! Channel charting with an LSTM autoencoder.
//!
//! The pipeline turns a CSI time series into 2-D chart coordinates:
//! [`dataset`] synthesises or loads CSI and windows it, [`model`] holds the
//! autoencoder and its hand-written backward pass, [`loss`] and [`train`]
//! fit it, [`align`] maps the chart into meters and [`metrics`] scores it.
//! [`baseline`] provides the classical-MDS chart used for comparison.

pub mod align;
pub mod baseline;
pub mod dataset;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod ndkernel;
pub mod train;

pub use error::{Error, Result};
pub use ndkernel::{Matrix, Rng};
