//! Deterministic performance analysis of a single multiclass FIFO server.
//!
//! The server holds one FIFO queue shared by `N` traffic classes; a packet
//! of class `n` is transmitted at the constant rate `C_n` once it reaches
//! the head of the queue. Each class is shaped by a leaky bucket
//! `(r_n, sigma_n)`. The crate provides:
//!
//! - [`curve`]: exact piecewise-linear min-plus algebra,
//! - [`system`]: class configuration and utilization,
//! - [`bounds`]: delay, backlog, guaranteed-rate and service-curve bounds
//!   behind a [`bounds::BoundMethod`] registry,
//! - [`sim`]: an exact event-driven simulator of the FIFO recursion,
//! - [`traffic`]: conformant trace generators and a conformance checker,
//! - [`verify`]: checkers that hold simulated schedules against the bounds,
//! - [`formats`]: the text file formats used by the command-line tool.
//!
//! All quantities are exact [`Rational`]s; time is in seconds, data in bits.

pub mod bounds;
pub mod curve;
pub mod formats;
pub mod presets;
pub mod rational;
pub mod registry;
pub mod sim;
pub mod system;
pub mod traffic;
pub mod verify;

pub use curve::{Curve, CurveError, Deviation, DeviationKind, Extended};
pub use rational::Rational;
pub use system::{ClassSpec, ConfigError, SystemConfig, Utilization};

