//! Low-dimensional postprocessing of multivariate ensemble forecasts with
//! rank-based reordering.
//!
//! Each forecast instance is split into small cases (single margins or
//! wind/temperature pairs). Every case is postprocessed parametrically
//! ([`uvemos`], [`bvemos`]), sampled, and then reordered so the samples
//! inherit the multivariate rank structure of a dependence template
//! ([`reorder`]). [`ranking`] provides the multivariate orderings and
//! [`scoring`] the verification tools.

pub mod bvemos;
pub mod dataset;
pub mod error;
pub mod io;
pub mod normal;
pub mod optim;
pub mod ranking;
pub mod reorder;
pub mod scoring;
pub mod uvemos;

pub use error::{Error, Result};
