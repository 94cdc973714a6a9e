//! Command implementations and the experiment harness behind the `bmf`
//! binary.

pub mod bench;
pub mod commands;
pub mod spec;
