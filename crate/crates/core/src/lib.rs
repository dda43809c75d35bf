//! Coupled hydrodynamic and photosynthetic model of an algal raceway pond.
//!
//! The water height along the pond is a truncated Fourier sine series over a
//! mean depth. A steady shallow-water balance turns that height into a
//! velocity field and a bottom topography. Algae ride horizontal layer
//! trajectories through the pond, receive exponentially attenuated light,
//! and evolve a photoinhibition state under Han kinetics. A paddle wheel at
//! the end of each lap permutes the layers; the periodic regime of that
//! loop defines the average specific growth rate. The crate computes that
//! rate, its exact discrete gradient with respect to the height Fourier
//! coefficients via an adjoint pass, and searches over permutations and
//! profiles for the most productive mixing strategy.

pub mod dynamics;
pub mod error;
pub mod field;
pub mod gradcheck;
pub mod hydro;
pub mod objective;
pub mod params;
pub mod photic;
pub mod search;

pub use error::{Error, Result};
pub use field::LayerField;
pub use params::{bind_m0, load_config, parse_config, serialize_config, ModelParams};
