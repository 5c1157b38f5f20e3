//! Scene synthesis for safety-critical driving tests.
//!
//! Natural-language scenario descriptions are decomposed into behavior,
//! geometry and spawn sub-descriptions, matched against a snippet knowledge
//! base, assembled into probabilistic scene scripts, and executed in a
//! deterministic 2D kinematic simulator against rule-based ego policies.

pub mod dsl;
pub mod harness;
pub mod kb;
pub mod metrics;
pub mod pipeline;
pub mod policy;
pub mod sampler;
pub mod sim;
