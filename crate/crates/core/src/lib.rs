//! Agent orchestration for e-commerce copilots: a learned listwise router
//! with a separator cutoff, a decision-tree planner, a plan executor over
//! conversable agents, and shared-base LoRA adapters.

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod exec;
pub mod linalg;
pub mod lora;
pub mod metrics;
pub mod orchestrator;
pub mod pipeline;
pub mod planner;
pub mod ranker;
pub mod runtime;
pub mod transport;

pub use exec::Exec;
