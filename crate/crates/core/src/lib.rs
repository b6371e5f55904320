//! Numerical lab for Klein–Gordon equations with moving potentials in one
//! space dimension.
//!
//! The equation is `u_tt − u_xx + u + Σ_k V_k(x − y_k(t)) u = F` on a periodic
//! box, written as a first-order system in the state `(u, u_t)`.

pub mod criteria;
pub mod dichotomy;
pub mod duhamel;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod modes;
pub mod norms;
pub mod potentials;
pub mod resolvent;
pub mod scattering;
pub mod spectrum;
pub mod state;
pub mod trajectory;

pub use error::{Error, Result};
pub use grid::Grid;
pub use state::StatePair;
