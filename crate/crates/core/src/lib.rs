pub mod cfront;
pub mod cli;
pub mod config;
pub mod context;
pub mod corpus;
pub mod diagnostics;
pub mod harness;
pub mod metrics;
pub mod obfuscate;
