//! Adaptable open-set intrusion detection.
//!
//! The pipeline turns packet captures into fixed-shape flow tensors, classifies
//! them with a small 1-D CNN behind one of three open-set heads (DOC, DOC++,
//! OpenMax), clusters the rejected flows into candidate classes, and retrains
//! a passive copy of the model that is swapped in atomically once an analyst
//! has labeled the clusters.

pub mod cluster;
pub mod error;
pub mod experiment;
pub mod heads;
pub mod ingest;
pub mod lifecycle;
pub mod neural;

pub use error::{Error, Result};
