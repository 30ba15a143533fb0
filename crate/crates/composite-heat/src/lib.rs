//! Interface temperatures and fluxes for the heat equation on composite
//! (multi-layer) one-dimensional domains, computed directly from the initial
//! and boundary data.
//!
//! In a medium made of layers with different diffusivities, the quantities
//! of practical interest are usually the temperature and heat flux *at the
//! layer interfaces*. This crate evaluates them without ever solving the
//! full space-time problem: the interface unknowns satisfy, node by node in
//! a complex spectral variable, a small dense linear system, and the
//! physical values are recovered by quadrature of the solved system along a
//! deformed contour in the upper half-plane.
//!
//! The main entry points are:
//!
//! * [`contour::evaluate_infinite`] / [`contour::evaluate_finite`] — the
//!   general maps for whole-line and bounded composite domains;
//! * [`contour::trace`] — batch evaluation over a time grid;
//! * [`closedform`] — independent fast paths for a single interface
//!   (Gaussian-kernel quadrature, explicit trigonometric integrands);
//! * [`fd`] — a Crank-Nicolson reference solver and the layer-wise
//!   boundary-value reconstruction driven by interface traces.
//!
//! Problems are described by [`domain::Problem`] (layers, piecewise
//! polynomial initial data, optional Robin boundary data) and validated
//! eagerly; all spectral work happens in the normalized frame produced by
//! [`domain::Problem::normalized`].

pub mod assembly;
pub mod closedform;
pub mod contour;
pub mod domain;
pub mod error;
pub mod fd;
pub mod linalg;
pub mod transforms;

pub use domain::{
    CompositeDomain, DomainKind, InitialData, PolyPiece, Problem, RobinBoundary, TimeSignal,
};
pub use error::{Error, Result};
pub use transforms::SpectralPoint;
