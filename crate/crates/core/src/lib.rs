#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod experiments;
pub mod asymptotics;
pub mod field;
pub mod fresnel;
pub mod nlse;
pub mod scattering;

pub use error::{Error, Result};
