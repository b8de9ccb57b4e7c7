//! Word embeddings, adversarial debiasing and fairness measurement for
//! resume/vacancy matching.

pub mod corpus;
pub mod error;

pub use error::{Error, Result};
pub mod embedding;
pub mod debias;
pub mod eval;
pub mod matcher;
pub mod cli;
