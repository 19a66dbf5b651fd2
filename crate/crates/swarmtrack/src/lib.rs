//! Simulation engine for information-driven coordination of a mobile
//! multi-sensor fleet performing distributed multi-target tracking.
//!
//! Each agent runs a local Kalman/JPDA tracker over range-bearing style
//! position measurements, fuses track information with its neighbors through
//! iterative consensus on information matrices, and selects velocity commands
//! with receding-horizon planning: a proximal-track base policy, a one-step
//! greedy optimizer, and two multiagent rollout variants (all-agents-at-once
//! and agent-by-agent) driven by Monte Carlo lookahead and Differential
//! Evolution.
//!
//! The crate is organized along the data path:
//!
//! - [`world`]: ground-truth target motion (Levy walk), the linear motion
//!   model shared with the filters, and the semantic occlusion map
//! - [`sensing`]: agent kinematics, square field of view, and the
//!   state-dependent measurement covariance
//! - [`tracking`]: per-agent Kalman prediction, JPDA gating/association/
//!   update, and M-of-N track maintenance
//! - [`consensus`]: proximity graph, cross-agent track correspondence, and
//!   the synchronous consensus-of-information iteration
//! - [`planning`]: belief-state lookahead, base/greedy/rollout policies, and
//!   the Differential Evolution optimizer
//! - [`metrics`]: OSPA distance and trial summary statistics
//! - [`scenario`], [`sim`], [`report`]: declarative scenario files, the
//!   two-rate simulation loop and batch experiment runner, and CSV/SVG/JSON
//!   result emission
//!
//! The `swarmtrack` binary wraps the harness behind `run`, `validate`, and
//! `compare` subcommands; the `examples/` directory exercises each subsystem
//! on its own.

pub mod cli;
pub mod consensus;
mod error;
pub mod metrics;
pub mod planning;
pub mod report;
pub mod scenario;
pub mod sensing;
pub mod sim;
pub mod tracking;
pub mod world;

pub use error::{Error, Result};
