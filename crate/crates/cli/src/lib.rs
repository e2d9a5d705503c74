//! Command-line driver and HTTP service for rangeforge.

pub mod cli;
pub mod service;
