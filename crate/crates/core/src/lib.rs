//! Turn a directory of heterogeneous semi-structured documents into a table.
//!
//! Two strategies are provided. Direct extraction prompts a language model on
//! every chunk of every document. Code extraction prompts it on a small
//! sample to identify the schema and to write many candidate extractor
//! programs per attribute, which are scored against the model's own answers
//! on a handful of documents, filtered, applied to the whole lake, and
//! combined with a weak-supervision label model.

pub mod aggregation;
pub mod corpus;
pub mod direct;
pub mod error;
pub mod evaluation;
pub mod gateway;
pub mod pipeline;
pub mod schema;
mod slots;
pub mod synthesis;
pub mod synthetic;
pub mod table;
pub mod text;
pub mod tokenizer;

pub use error::{Error, Result};
