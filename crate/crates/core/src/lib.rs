//! Distortion estimates for one-dimensional maps with power-law critical
//! points.
//!
//! The pipeline runs from a [`map::MapModel`] to its
//! [`structure::CriticalStructure`], the singular
//! [`coordinate::CoordinateChange`] near critical values, suitable sequences
//! of inverse branches ([`orbit`]) and finally the distortion ratios and the
//! Denjoy-Koebe bound ([`distortion`]).

// Negated float comparisons below are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod config;
pub mod coordinate;
pub mod distortion;
pub mod exponent;
pub mod interval;
pub mod map;
pub mod orbit;
pub mod report;
pub mod runner;
pub mod structure;

pub use error::{Error, Result};
pub use interval::{Domain, Interval};
pub use map::{CriticalPoint, Family, MapModel, Side};
