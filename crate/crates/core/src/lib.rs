//! Leveled item banks, the adaptive session engine and its scoring rules,
//! the attempt store, the cohort simulator and the cohort comparison pipeline.

pub mod analysis;
pub mod bank;
pub mod engine;
pub mod expr;
pub mod scenario;
pub mod scoring;
pub mod sim;
pub mod store;
