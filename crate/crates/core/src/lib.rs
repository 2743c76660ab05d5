//! Secure integrated sensing and communication (ISAC) transmit design with
//! joint antenna allocation.
//!
//! A dual-function base station with an `M`-element uniform linear array and
//! `G < M` RF chains serves one single-antenna user while illuminating a set
//! of point targets, some of which are suspected eavesdroppers. The design
//! minimizes the mismatch between the radiated and a rectangular desired
//! beampattern subject to a secrecy-rate floor, a total power budget and
//! per-antenna caps gated by a binary antenna-allocation vector.
//!
//! The crate is organized bottom-up:
//!
//! * [`scenario`] parses scenario files and builds steering vectors/channels.
//! * [`metrics`] evaluates beampatterns, SINRs and secrecy rates.
//! * [`conic`] is a small linear-conic modeling layer with a native
//!   primal-dual interior-point solver for LP, second-order and PSD cones.
//! * [`optimizer`] builds the semidefinite-relaxed subproblems, runs the
//!   penalized sequential convex programming loop with a 1-D search over the
//!   eavesdropper SINR cap and reconstructs rank-one beamformers.
//! * [`experiments`] drives solves and sweeps and writes the output files.
//!
//! Channels are stored as column vectors; every quadratic form applies the
//! conjugate transpose at the use site (`h^H W h`).

pub mod conic;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod par;
pub mod report;
pub mod scenario;

pub use metrics::{AngleGrid, BeamformingDesign};
pub use optimizer::{alternating_optimize, OptimizerOptions};
pub use report::DesignReport;
pub use scenario::{parse_scenario, ChannelSet, ScenarioConfig};
