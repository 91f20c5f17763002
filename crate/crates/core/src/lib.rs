//! Heterogeneous-hypergraph recommender.
//!
//! Users, items and categories are vertices of one hypergraph. Each
//! hyperedge ties a user to the items they interacted with inside a single
//! category. Sparse users are completed from their cluster, random walks
//! draw sub-hypergraph views, and a convolutional encoder with attention
//! fusion scores user/item pairs, trained with a pairwise ranking loss.

pub mod check;
pub mod checkpoint;
pub mod completion;
pub mod construction;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod graph;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
pub use graph::{
    BipartiteGraph, CategoryMap, HeteroHypergraph, Hyperedge, IdMap, InteractionRecord, VertexId, VertexKind,
    VertexLayout,
};
