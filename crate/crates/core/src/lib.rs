//! Bicycle kinematics on closed curves and polygons.
//!
//! A bicycle is a segment of fixed length whose rear end moves along the
//! segment. Given the front track, the bicycle's direction after one lap is a
//! Moebius function of its initial direction (the bicycle monodromy). Fixed
//! points of the monodromy give closed rear tracks and, by doubling the
//! segment, partner front tracks. This crate computes all of these for sampled
//! curves and polygons, together with the conserved quantities of the filament
//! hierarchy and a harness of numerical checks.

pub mod curve;
pub mod discrete;
pub mod error;
pub mod experiments;
pub mod flows;
pub mod frame;
pub mod invariants;
pub mod json;
pub mod moebius;
pub mod par;
pub mod quadrature;
pub mod resample;
pub mod shapes;
pub mod smooth;
pub mod spectral;
pub mod stencil;

pub use curve::{Polygon, SampledCurve, Vec3, VectorField};
pub use error::{BikeError, Result};
pub use moebius::{Chart, MoebiusMap, MonodromyClass};
pub use par::Exec;
pub use shapes::{make_curve, Shape};
