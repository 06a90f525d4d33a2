//! Command-line tool and HTTP service around `adaptest-core`.

pub mod adapter;
pub mod api;
pub mod cli;
pub mod config;
pub mod plot;
