//! Synthesis of synchronization for finite-state shared-memory concurrent programs.
//!
//! Given an unsynchronized concurrent program and a branching-time specification,
//! the pipeline derives a program-semantics formula, decides it with an AND/OR
//! tableau, extracts a finite model, and reads conditional critical regions back
//! off the model.  The result can be compiled further to coarse- or fine-grained
//! lock/condition-variable pseudocode and is re-verified end to end by an
//! independent explicit-state model checker.

pub mod bounded;
pub mod codegen;
pub mod corpus;
pub mod lang;
pub(crate) mod lex;
pub mod logic;
pub mod modelx;
pub mod phigen;
pub mod pipeline;
pub mod sim;
pub mod synth;
pub mod tableau;
pub mod vocab;
