//! Retrieval-augmented question answering over a university course corpus:
//! corpus rendering, chunking, exact vector retrieval, the condense-then-answer
//! chat pipeline and an offline evaluation harness.

pub mod chunker;
pub mod corpus;
pub mod embed;
pub mod engine;
pub mod eval;
pub mod io;
pub mod remote;
