//! Joint-free structured learning of event coreference and event sequencing
//! relations over a document's mentions.

pub mod clustering;
pub mod corpus;
pub mod decoder;
pub mod features;
pub mod metrics;
pub mod relgraph;
pub mod synth;
pub mod trainer;
