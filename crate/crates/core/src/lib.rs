//! Agent orchestration engine for multiple-choice visual reasoning.

pub mod ablation;
pub mod agents;
pub mod backend;
pub mod cli;
pub mod eval;
pub mod images;
pub mod orchestrator;
pub mod prompt;
pub mod runtime;
pub mod tools;
pub mod trace;
pub mod transcript;
