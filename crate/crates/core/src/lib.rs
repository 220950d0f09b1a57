//! Pre-event simulation of human-perceived earthquake intensity with a
//! language model acting as a virtual sensor.
//!
//! The pipeline samples points inside administrative zones, fuses local
//! hazard, building, census and imagery features for each point, renders a
//! structured prompt, collects a Modified Mercalli Intensity rating with a
//! reasoning trace, and scores zone averages against crowdsourced reports.

pub mod analysis;
pub mod eval;
pub mod exec;
pub mod export;
pub mod fsutil;
pub mod fusion;
pub mod geo;
pub mod llm;
pub mod mmi;
pub mod pipeline;
pub mod prompt;
pub mod scenario;

pub use exec::Execution;
pub use mmi::MmiLevel;
