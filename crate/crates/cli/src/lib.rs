#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod error;
pub mod fieldio;
pub mod manifest;
pub mod plots;
