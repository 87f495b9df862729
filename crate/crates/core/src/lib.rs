//! Scores of Ornstein–Uhlenbeck-smoothed densities, computed in closed form
//! for Gaussian mixtures and by quadrature of the tilted measure otherwise,
//! together with the spectral scans, samplers and scaling checks built on
//! them.

pub mod claims;
pub mod cli;
pub mod densities;
pub mod dynamics;
pub mod error;
pub mod forward;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod score;
pub mod spectral;
pub mod tilted;
pub mod verify;

pub use error::{Error, Result};
