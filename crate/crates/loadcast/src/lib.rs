pub mod cli;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod replay;
pub mod runtime;
pub mod windowing;
