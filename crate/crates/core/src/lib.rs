//! Bayesian preference inference and utilitarian welfare for deterministic
//! cellular worlds.
//!
//! The pipeline: build a [`cellsys::CellularSystem`], generate a
//! [`cellsys::History`], pick a family of spaces and a hypothesis set of
//! utility expressions ([`udsl`]), then ask [`inference`] for posteriors over
//! utilities given an observed structure, or [`welfare`] for the summed
//! expected utility of a whole history.

pub mod cellsys;
pub mod cli;
pub mod config;
pub mod inference;
pub mod oracle;
pub mod structures;
pub mod udsl;
pub mod welfare;

mod numeric;
pub mod verify;
