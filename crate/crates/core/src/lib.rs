//! Event-driven Monte Carlo for the spatial Λ-Fleming-Viot process with
//! selection (SΛFVS) and its branching-coalescing dual.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: parameters, the radius measure and derived rates (jump
//!   intensity, σ², neighbourhood size).
//! - [`events`]: exact sampling of reproduction events that cover tracked
//!   lineages, and the mark sets deciding which lineages an event affects.
//! - [`dual`]: the branching-coalescing dual as a state machine.
//! - [`excursion`]: the two-lineage separation process and its
//!   coalesce/diverge/overshoot classification.
//! - [`caterpillar`]: caterpillars and branching caterpillars.
//! - [`bbm`]: reference binary branching Brownian motion and comparators.
//! - [`forward`]: the allele-frequency field on a torus and the moment
//!   duality check.
//! - [`harness`]: configs, replicate farming and result persistence.

pub mod bbm;
pub mod caterpillar;
pub mod dual;
pub mod error;
pub mod events;
pub mod excursion;
pub mod forward;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod quadrature;
pub mod stats;
pub mod stream;

pub use error::{Error, Result};
pub use geometry::{Dim, Point, Space};
pub use model::{ModelParams, RadiusMeasure, Selection};
pub use stream::{ModuleTag, Stream};
