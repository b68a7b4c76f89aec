//! Iterative clarification-rewriting for conversational query rewriting.
//!
//! Data construction (`crdg`, `prefdata`, `sftdata`), retrieval (`sparse`,
//! `dense`), rank fusion (`fusion`), evaluation (`eval`) and the inference
//! pipeline (`pipeline`) over a shared [`Retriever`] abstraction.

pub mod config;
pub mod corpus;
pub mod crdg;
pub mod dense;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gen;
pub mod manifest;
pub mod pipeline;
pub mod prefdata;
pub mod ranking;
pub mod sftdata;
pub mod sparse;
pub mod throttle;

pub use error::{Error, Result};
pub use ranking::{Hit, RankedList, Retriever};
