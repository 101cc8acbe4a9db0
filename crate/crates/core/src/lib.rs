pub mod alignment;
pub mod backend;
pub mod experiment;
pub mod ngram;
pub mod stats;
pub mod presets;
pub mod corpus;
pub mod pipeline;
pub mod report;
pub mod completions;
pub mod cli;
