//! Free-group words and automorphism orbits, train-track verification,
//! translation-length functions on marked metric graphs, horizon-bounded
//! rigidity property checks, and construction of non-rigidity witness pairs.

#![forbid(unsafe_code)]

pub mod freegroup;
pub mod graph;
pub mod outerspace;
pub mod rigidity;
pub mod trainmap;
pub mod witness;

pub use freegroup::{CyclicWord, FreeMap, Letter, Word};
pub use graph::{CyclicPath, Graph, Path, SpanningTree, Subgraph};
pub use outerspace::MarkedMetricGraph;
pub use rigidity::Direction;
pub use trainmap::TopRep;
pub use witness::{WitnessOutcome, WitnessPair};
