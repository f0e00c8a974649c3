//! Quantum-circuit GAN and KDE Markov baseline for gaze-velocity series.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod markov;
pub mod metrics;
pub mod optim;
pub mod statevector;
pub mod trainer;

pub use error::{Error, Result};
