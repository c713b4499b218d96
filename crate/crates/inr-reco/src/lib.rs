//! Scan-specific parallel MRI reconstruction from undersampled multi-coil
//! k-space.
//!
//! The engine jointly fits two sine-activated coordinate networks -- one for
//! the complex image, one for the per-coil complex sensitivity maps -- by
//! minimizing a data-consistency loss plus total-variation regularization on
//! the image and a selectable regularizer on the sensitivities. At inference
//! the network's k-space prediction is combined with the measured samples
//! (hard data consistency) before the final inverse transform and
//! sum-of-squares coil combination.

pub mod cli;
pub mod embed;
pub mod error;
pub mod fourier;
pub mod image;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod phantom;
pub mod recon;
pub mod rng;
pub mod sampling;
pub mod siren;
pub mod train;

pub use error::{Error, Result};
