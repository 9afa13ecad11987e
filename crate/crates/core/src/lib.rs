//! Generalized mean field (GMF) inference for discrete exponential-family
//! graphical models.
//!
//! The crate provides a log-space factor-graph representation, an exact
//! inference oracle, disjoint variable clusterings with their border
//! topology, the GMF coordinate-ascent engine (with naive mean field as the
//! all-singleton special case), loopy belief propagation, seeded benchmark
//! model generators, and an experiment harness scoring approximate marginals
//! by L1 error.

pub mod bp;
pub mod clustering;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod factor_graph;
pub mod gmf;
pub mod models;
pub mod report;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
pub use factor_graph::{Conditioned, Cpd, DirectedModel, Factor, FactorGraph, Variable};
