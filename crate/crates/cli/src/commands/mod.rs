//! Subcommand implementations.

pub mod decompose;
pub mod degrade;
pub mod evaluate;
pub mod restore;
pub mod train;
