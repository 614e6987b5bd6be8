//! Synthesis, simulation, and verification of avoidance controllers for
//! linear two-agent systems evolving on arbitrary time scales.
//!
//! A time scale is a nonempty closed subset of the reals. The crate models
//! such sets as finite unions of closed segments, provides the delta
//! calculus on them (jump operators, derivatives, integrals), solves the
//! graininess-parametric Lyapunov equation that underlies controller
//! synthesis, and simulates the resulting closed loop exactly at scattered
//! points and by Runge-Kutta integration on dense stretches.

pub mod avoidance;
pub mod calculus;
pub mod inclusion;
pub mod error;
pub mod linalg;
pub mod simulator;
pub mod timescale;

pub use error::{Error, Result};
pub use timescale::{Generator, PointClass, Segment, SideKind, TimeScale};
