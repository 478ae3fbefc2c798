//! Evolutionary synthesis of sparse neural-network architectures.
//!
//! Starting from one trained dense ancestor, populations of offspring are
//! synthesized generation by generation: clusters (hidden units) and their
//! synapses survive stochastically with probability scaled by synaptic
//! strength under a configurable environmental budget, and multiple parents
//! are combined through cluster- and synapse-level mating functions. Gene
//! tags pin every cluster to its ancestral position, which makes
//! like-with-like alignment possible during mating and architectural
//! overlap measurable afterwards.
//!
//! The crate is organized around five pieces:
//! - [`arch`]: the sparse tagged architecture representation, storage
//!   accounting, and its JSON file format.
//! - [`synthesis`]: alignment, mating functions, survival sampling, and
//!   offspring construction.
//! - [`similarity`]: percentage overlap of tagged clusters and
//!   population-level diversity statistics.
//! - [`trainer`]: MNIST IDX ingestion plus masked forward/backward training
//!   and evaluation.
//! - [`harness`]: the end-to-end experiment driver and its report files.

pub mod arch;
pub mod harness;
pub mod similarity;
pub mod synthesis;
pub mod trainer;

#[doc(hidden)]
pub mod testutil;
