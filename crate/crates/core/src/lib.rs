#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Joint scheduling and sampling for multi-source status-update systems.
//!
//! After every delivery a decision maker picks which source transmits next
//! and how long to wait before generating its packet. This crate contains
//! the pieces needed to pick those policies well and to measure them:
//!
//! * [`penalty`], [`service`], [`state`]: age-penalty functions, service-time
//!   laws, and the sorted-age system state on an integer tick grid.
//! * [`policies`]: the maximum-age-first and uniform random schedulers plus
//!   the sampler dispatch used by the simulator.
//! * [`mdp`]: the average-cost semi-MDP over sorted age vectors, relative
//!   value iteration with the threshold shortcut, the outer bisection on the
//!   ratio objective, and closed-form zero-wait analytics.
//! * [`approx`]: low-complexity threshold and water-filling samplers and the
//!   golden-section tuner for their threshold.
//! * [`sim`]: a delivery-epoch simulator estimating both age metrics.
//! * [`oracle`]: exact stationary-policy evaluation and exhaustive search on
//!   tiny instances.
//!
//! The crate is `no_std` with `alloc`; the `parallel` feature parallelizes
//! value-iteration sweeps with rayon.

extern crate alloc;

pub mod approx;
pub mod error;
mod linalg;
pub mod mdp;
pub mod oracle;
pub mod penalty;
pub mod policies;
mod quad;
pub mod service;
pub mod sim;
pub mod state;

pub use error::{Error, Result};
pub use penalty::PenaltyFunction;
pub use service::{ServiceModel, ServiceMoments};
pub use state::{SystemState, TimeGrid, WaitingMenu};
