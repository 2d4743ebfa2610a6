//! Grammar-compressed structural self-index for XML documents.

pub mod automata;
pub mod corpus;
pub mod eval;
pub mod grammar;
pub mod index;
pub mod labels;
pub mod navigation;
pub mod xml;

pub use labels::{LabelId, LabelTable};
