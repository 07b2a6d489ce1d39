//! Closed-loop Markov-modulated Markov chains.
//!
//! A visible chain moves according to one of several transition pages, and
//! which page applies is decided by a latent chain. The loop closes because
//! the latent chain's own transitions depend on where the visible chain is,
//! through a partition of the visible state space. This crate covers the
//! full life cycle of such models:
//!
//! * [`model`] — model construction, validation, and the lift to an
//!   ordinary hidden Markov model on the product state space;
//! * [`simulate`] — sampling joint and visible trajectories, plus a
//!   trip-based scenario generator for origin/terminal walks;
//! * [`estimate`] — likelihood evaluation (direct enumeration, unscaled and
//!   scaled forward-backward) and EM parameter estimation for single and
//!   multi-trajectory data;
//! * [`evaluate`] — label alignment and distance reporting between an
//!   estimated and a reference model;
//! * [`stochastic`] — the underlying probability vectors, row-stochastic
//!   matrices, and state-space partitions;
//! * [`io`] — the on-disk JSON and text formats shared with the CLI.
//!
//! All randomness flows through [`rng::RandomSource`], so every simulation
//! and estimate is bit-reproducible from a `u64` seed.

pub mod error;
pub mod estimate;
pub mod evaluate;
pub mod io;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod stochastic;

pub use error::{Error, Result};
pub use estimate::{EmConfig, EmReport, FbCache, UnreachedPolicy, XiSlice};
pub use evaluate::{EvalReport, PageDistances, PrMode};
pub use model::{ClMmmc, FreezeMask, HmmLift};
pub use rng::RandomSource;
pub use simulate::{JointTrajectory, LatentCoupling, Trajectory, TripScenario};
pub use stochastic::{Partition, ProbVector, StochasticMatrix};
