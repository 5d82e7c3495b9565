//! Transition-based BiLSTM dependency parsing with word-representation
//! ablations and head-and-dependents evaluation.

pub mod analysis;
pub mod cli;
pub mod conllu;
pub mod error;
pub mod neural;
pub mod parser;
pub mod representation;
pub mod synthetic;
pub mod transition;

pub use error::{Error, Result};
