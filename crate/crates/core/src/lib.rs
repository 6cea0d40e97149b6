//! Hybrid additive-subtractive feature recognition toolkit: a restricted
//! B-Rep kernel, STEP exchange, a labeled dataset generator, hierarchical
//! graphs, rule-based dimension extraction and evaluation metrics.

pub mod brep;
pub mod featuregen;
pub mod geom;
pub mod geomextract;
pub mod hiergraph;
pub mod metrics;
pub mod step_io;
