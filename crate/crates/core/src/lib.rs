//! Multi-layer feedforward spiking networks of leaky integrate-and-fire
//! neurons, trained with NormAD spatio-temporal error backpropagation.

pub mod datagen;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod network;
pub mod normad;
pub mod neuron;

pub use error::{Error, Result};
