//! Gravity-constrained block construction pipeline.
//!
//! The library models a voxel building task where plans are written in a
//! deliberately two-dimensional action language: every action addresses a
//! grid column, and vertical position falls out of execution order plus a
//! gravity rule. Around that core sit structure analysis, plan verification
//! passes, prompt enrichment, a clarification policy, a planner boundary,
//! and a scored benchmark harness.

pub mod analyzer;
pub mod clarify;
pub mod enrichment;
pub mod executor;
pub mod grid;
pub mod harness;
mod util;
pub mod plan;
pub mod planner;
pub mod stats;
pub mod verifier;
