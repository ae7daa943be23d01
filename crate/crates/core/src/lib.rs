//! Spectral cut-off estimation of the Blumenthal-Getoor index of a Lévy process
//! from low-frequency increments or from noisy option prices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod calibration;
pub mod ecf;
pub mod harness;
pub mod levy_models;
pub mod option_market;
pub mod rng;
pub mod spectral;
