pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod ilp;
pub mod importance;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod reranker;
pub mod rouge;
pub mod scaling;
pub mod stopwords;
pub mod synthetic;

pub use error::{Error, Result};
