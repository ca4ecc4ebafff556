//! Bound states of a particle above one or between two mirrors in a uniform
//! gravitational field, closed-form Airy matrix elements, and the amplitude
//! dynamics induced by vibrating mirrors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod airy;
pub mod dynamics;
pub mod error;
pub mod matel;
pub mod ode;
pub mod quad;
pub mod roots;
pub mod spectrum;
pub mod units;
pub mod validate;

pub use error::{Error, Result};
