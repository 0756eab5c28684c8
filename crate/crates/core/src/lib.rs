//! Generation and evaluation toolkit for cross-modal multi-hop question
//! answering over table, text, and image contexts.

pub mod column;
pub mod context;
pub mod linker;
pub mod text;
pub mod atomic;
pub mod composer;
pub mod dataset;
pub mod distractor;
pub mod eval;
pub mod executor;
pub mod pipeline;
pub mod stats;
