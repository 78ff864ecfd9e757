//! Library surface of the harness: image I/O, patch sampling, run
//! configuration, checkpointing and the subcommand implementations. The
//! `ronet` binary is a thin argument parser over this.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod imageio;
pub mod manifest;
