//! Command-line front end for the robust-cbf safe-control library.

pub mod commands;
pub mod config;
pub mod output;
