//! Learned, hierarchical temporal decay for knowledge-graph retrieval.
//!
//! Edges carry value embeddings and timestamps. Re-observations of a concept
//! are split into supersessions and reinforcements by a distance threshold,
//! producing censored lifetime records. Predicates are clustered by their
//! temporal profile, a Weibull decay surface is fitted per cluster and shrunk
//! toward it per context and entity, and retrieval ranks edges by
//! `sim^α · S(age)^β`.

pub mod clustering;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod kg;
pub mod optim;
pub mod pipeline;
pub mod report;
pub mod retrieval;
pub mod signals;
pub mod survival;
pub mod synthgen;

pub use error::{Error, Result};
