//! Mapping-rule driven preprocessing of tabular sources before RDF
//! materialization, with a reference materializer and a benchmark harness.

pub mod bench;
pub mod model;
pub mod pipeline;
pub mod rdfize;
pub mod rml;
pub mod store;
pub mod template;
#[cfg(feature = "testing")]
pub mod testing;
pub mod transform;
