//! Alternating optimization of the allocation, the eavesdropper SINR cap and
//! the transmit covariances.
//!
//! [`run_pscp`] drives the allocation toward a binary vector by majorizing
//! the concave penalty `H(u)`; every iteration performs a full
//! [`lambda_search`] over semidefinite-relaxed subproblems built by
//! [`build_sdr_p5`]. [`round_and_polish`] then fixes the `G` strongest
//! antennas, re-solves, and recovers a rank-one communication beam with
//! [`rank_one_reconstruct`].

mod driver;
pub mod pscp;
mod reconstruct;
pub mod sdr;
mod search;

pub use driver::{
    alternating_optimize,
    optimize_allocation, round_and_polish, run_pscp, solve_baseline, solve_fixed_support, top_g_support,
    OptimizationOutcome, OptimizerError, OptimizerOptions, PolishedDesign, PscpIteration, PscpState,
    StopReason, TraceRecord, BEAM_THRESHOLD,
};
pub use pscp::{binariness, pscp_linearize, LinearizedPenalty};
pub use reconstruct::{extract_sensing_beams, rank_one_reconstruct, ReconstructError, Reconstruction};
pub use sdr::{
    build_sdr_p5, secrecy_beta, solve_subproblem, AllocationMode, SdrLayout, SdrProblem, SubproblemFailure,
    SubproblemSolution,
};
pub use search::{argmin_lambda, lambda_search, AllInfeasible, LambdaCandidate, LambdaSearchResult};
