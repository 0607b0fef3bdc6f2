//! Sparse model selection by forward-backward greedy optimization, with a
//! specialization to structure learning of pairwise binary (Ising) graphical
//! models.
//!
//! The crate is organized around a small set of pieces:
//!
//! - [`losses`] defines the [`losses::SmoothLoss`] contract together with two
//!   concrete losses: the per-node conditional logistic loss used for
//!   graphical-model neighborhood estimation, and a squared loss used for
//!   closed-form oracle checks.
//! - [`greedy`] implements the forward-backward greedy optimizer over any
//!   smooth loss, with full stopping-condition bookkeeping in a step trace.
//! - [`ising`] provides Ising model representations, standard graph
//!   topologies, random coupling assignment, exact small-model enumeration,
//!   and a Gibbs sampler producing `±1` sample matrices.
//! - [`structure`] runs the greedy per node and combines neighborhoods into
//!   an edge-set estimate, alongside an ℓ1-regularized logistic baseline.
//! - [`diagnostics`] estimates restricted strong convexity/smoothness
//!   constants by brute force, measures empirical noise levels, and checks
//!   the recovery guarantees on instances where the constants are computable.

pub mod diagnostics;
pub mod greedy;
pub mod ising;
mod linalg;
pub mod losses;
pub mod structure;
