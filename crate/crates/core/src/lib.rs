//! Reward design for restless multi-armed bandits.
//!
//! A generator proposes candidate global reward functions for a preference
//! prompt, each candidate is scored clause by clause through Whittle-index
//! simulation, and a generalized p-mean social welfare function picks one.

pub mod par;
pub mod rmab;
pub mod datagen;
pub mod dsl;
pub mod adjudicator;
pub mod generator;
pub mod eval;
pub mod config;
