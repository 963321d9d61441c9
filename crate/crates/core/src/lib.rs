//! Percolation laboratory: first passage percolation on the complete graph,
//! invasion percolation on the Poisson-weighted infinite tree, the explicit
//! coupling between them, and a seeded Monte Carlo harness that checks the
//! limit laws and exact identities at desk scale.

pub mod ctbp;
pub mod coupling;
pub mod exploration;
pub mod fpp;
pub mod harness;
pub mod ip;
pub mod pgw;
pub mod pwit;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod weights;

pub use pwit::{PwitSample, VertexId};
pub use weights::WeightFamily;
