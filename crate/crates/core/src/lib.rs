//! Grid-world simulation, expert planner, level generators, dataset builders
//! and evaluation harness.

pub mod grid;
pub mod mission;
pub mod path;
pub mod rng;
pub mod bot;
pub mod levels;
pub mod format;
pub mod dataset;
pub mod harness;
