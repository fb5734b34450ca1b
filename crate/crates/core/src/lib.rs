//! Sequential relay selection for sleep-wake cycling sensor networks.
//!
//! A forwarding node ("source") holds a packet and waits for an unknown number
//! of relays to wake up at iid uniform instants in `(0, T)`. Each relay reveals
//! an iid reward. At every wake-up the source either forwards to the best relay
//! seen so far or keeps waiting, trading mean delay against mean reward via a
//! Lagrange multiplier `eta`.
//!
//! The crate provides:
//!
//! * [`model`]: reward distributions, initial beliefs on the relay count and the
//!   conditional order-statistic kernels of the wake-up process.
//! * [`belief`]: the Bayes update of the posterior on the relay count.
//! * [`threshold`]: backward induction of the known-count threshold functions
//!   `phi_l(w, b)` on a discrete grid, plus edge thresholds `delta_l`.
//! * [`bounds`]: inner/outer approximations of the optimum stopping set and a
//!   brute-force oracle for `K <= 3`.
//! * [`simplified`]: the Poisson-arrival simplified model and its single reward
//!   threshold `alpha`.
//! * [`policy`], [`onehop`], [`e2e`]: the decision rules and the one-hop and
//!   multihop Monte-Carlo simulators.
//! * [`verify`]: self-check property suites.

pub mod belief;
pub mod bounds;
pub mod cache;
pub mod e2e;
mod error;
pub mod model;
pub mod onehop;
pub mod policy;
pub mod quadrature;
pub mod rng;
pub mod simplified;
pub mod stats;
pub mod threshold;
pub mod verify;

pub use belief::{BeliefState, HopObservation};
pub use bounds::{BoundKind, BoundSpec, ExactOracle};
pub use error::{Error, Result};
pub use model::{InitialBelief, RewardDistribution, WakeModel};
pub use policy::{Action, CeilingRule, DecisionContext, Policy, PolicyKind, PolicySpec};
pub use simplified::SimplifiedSpec;
pub use threshold::{SolverGrid, ThresholdGrid};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
